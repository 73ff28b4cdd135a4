/** Thin fetch client for the inference service. */

import type { RenderParams, RenderResponse, SegmentResponse } from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  async segment(pngBytes: ArrayBuffer | Blob): Promise<SegmentResponse> {
    const res = await this.fetchFn(`${this.baseUrl}/api/v1/segment`, {
      method: "POST",
      headers: { "Content-Type": "image/png" },
      body: pngBytes,
    });
    return this.unwrap<SegmentResponse>(res);
  }

  async render(imagePngB64: string, params: RenderParams): Promise<RenderResponse> {
    const res = await this.fetchFn(`${this.baseUrl}/api/v1/render`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ image_png_b64: imagePngB64, params }),
    });
    return this.unwrap<RenderResponse>(res);
  }

  private async unwrap<T>(res: Response): Promise<T> {
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const doc = (await res.json()) as { error?: string };
        if (doc.error) detail = doc.error;
      } catch {
        /* non-JSON error body; keep statusText */
      }
      throw new ApiError(detail, res.status);
    }
    return (await res.json()) as T;
  }
}
