import { z } from "zod";

export const attributesResponse = z.object({
  names: z.array(z.string()).min(1),
  latent_dim: z.number().int().positive(),
  resolution: z.number().int().positive(),
  checkpoint_id: z.string(),
});

export const invertResponse = z.object({
  z: z.array(z.number()),
  predicted_attributes: z.record(z.number()),
});

export const imageResponse = z.object({
  image: z.string().min(1),
});

export const generateResponse = z.object({
  image: z.string().min(1),
  z: z.array(z.number()),
  seed: z.number().int(),
});

export const interpolateResponse = z.object({
  frames: z.array(z.string().min(1)).min(2),
});

export const apiErrorBody = z.object({
  code: z.string(),
  message: z.string(),
});

export type AttributesInfo = z.infer<typeof attributesResponse>;
export type InvertResult = z.infer<typeof invertResponse>;
export type GenerateResult = z.infer<typeof generateResponse>;
