/** Trailing debounce: only the last call in a burst fires, after `waitMs` of quiet. */
export interface Debounced<A extends unknown[]> {
  (...args: A): void;
  cancel(): void;
  flush(): void;
}

export function debounce<A extends unknown[]>(fn: (...args: A) => void, waitMs: number): Debounced<A> {
  let timer: ReturnType<typeof setTimeout> | undefined;
  let pending: A | undefined;

  const wrapped = (...args: A) => {
    pending = args;
    if (timer !== undefined) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = undefined;
      const args2 = pending!;
      pending = undefined;
      fn(...args2);
    }, waitMs);
  };
  wrapped.cancel = () => {
    if (timer !== undefined) clearTimeout(timer);
    timer = undefined;
    pending = undefined;
  };
  wrapped.flush = () => {
    if (timer === undefined || pending === undefined) return;
    clearTimeout(timer);
    timer = undefined;
    const args = pending;
    pending = undefined;
    fn(...args);
  };
  return wrapped;
}
