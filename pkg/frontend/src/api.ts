import { z } from "zod";
import {
  apiErrorBody,
  attributesResponse,
  generateResponse,
  imageResponse,
  interpolateResponse,
  invertResponse,
  type AttributesInfo,
  type GenerateResult,
  type InvertResult,
} from "./schemas.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Typed client for the /v1 inference endpoints; every response is schema-validated. */
export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => globalThis.fetch(...args),
  ) {}

  private async request<T>(path: string, schema: z.ZodType<T>, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, {
      method: body === undefined ? "GET" : "POST",
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload: unknown = await response.json();
    if (!response.ok) {
      const parsed = apiErrorBody.safeParse(payload);
      if (parsed.success) throw new ApiError(response.status, parsed.data.code, parsed.data.message);
      throw new ApiError(response.status, "unknown", "malformed error body");
    }
    return schema.parse(payload);
  }

  attributes(): Promise<AttributesInfo> {
    return this.request("/v1/attributes", attributesResponse);
  }

  invert(image: string): Promise<InvertResult> {
    return this.request("/v1/invert", invertResponse, { image });
  }

  reconstruct(image: string): Promise<string> {
    return this.request("/v1/reconstruct", imageResponse, { image }).then((r) => r.image);
  }

  editImage(image: string, attributes: Record<string, number>): Promise<string> {
    return this.request("/v1/edit", imageResponse, { image, attributes }).then((r) => r.image);
  }

  editLatent(zVec: number[], attributes: Record<string, number>): Promise<string> {
    return this.request("/v1/edit", imageResponse, { z: zVec, attributes }).then((r) => r.image);
  }

  generate(attributes: Record<string, number>, seed?: number): Promise<GenerateResult> {
    return this.request("/v1/generate", generateResponse, seed === undefined ? { attributes } : { attributes, seed });
  }

  interpolate(body: {
    a: { image?: string; z?: number[]; attributes?: Record<string, number> };
    b?: { image?: string; z?: number[]; attributes?: Record<string, number> };
    steps: number;
    mode: "latent" | "pose";
  }): Promise<string[]> {
    return this.request("/v1/interpolate", interpolateResponse, body).then((r) => r.frames);
  }
}
