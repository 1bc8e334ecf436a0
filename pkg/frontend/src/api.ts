/** Typed client for the exploration service HTTP API. */

export interface ParameterInfo {
  name: string;
  min: number;
  max: number;
}

export interface Meta {
  parameters: ParameterInfo[];
  image_extents: [number, number];
  volume_extents: number[];
  normalization: { value_min: number; value_max: number };
  config_hash: string;
  checkpoints: Record<string, string>;
}

export interface CameraSpec {
  eye: number[];
  look_at: number[];
  up: number[];
  vfov_deg: number;
  width: number;
  height: number;
}

export interface TransferFunctionSpec {
  points: { position: number; rgba: [number, number, number, number] }[];
}

export interface RenderRequest {
  params: number[];
  camera?: CameraSpec;
  tf?: TransferFunctionSpec;
}

export interface Provenance {
  config_hash: string;
  codec_ids: Record<string, string>;
  predictor_ids: Record<string, string>;
  out_of_range: string[];
}

export interface RenderResult {
  blob: Blob;
  provenance: Provenance | null;
  /** The exact body that produced this image, for reproducibility. */
  requestBody: string;
}

export interface SensitivityResult {
  parameter: string;
  index: number;
  rows: [number, number][];
  csv: string;
}

export class ServiceError extends Error {
  constructor(message: string, readonly status: number,
              readonly diagnosticId?: string) {
    super(message);
  }
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let message = `${response.status}`;
  let diagnostic: string | undefined;
  try {
    const body = await response.json();
    message = body.error ?? message;
    diagnostic = body.diagnostic_id;
  } catch {
    /* non-JSON error body */
  }
  throw new ServiceError(message, response.status, diagnostic);
}

export class Client {
  constructor(private readonly base: string = "") {}

  async meta(): Promise<Meta> {
    const response = await fetch(`${this.base}/meta`);
    await raiseForStatus(response);
    return response.json();
  }

  async render(request: RenderRequest): Promise<RenderResult> {
    const body = JSON.stringify(request);
    const response = await fetch(`${this.base}/render`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body,
    });
    await raiseForStatus(response);
    const header = response.headers.get("x-viewlatent-provenance");
    return {
      blob: await response.blob(),
      provenance: header ? JSON.parse(header) : null,
      requestBody: body,
    };
  }

  async sensitivity(params: number[], index: number,
                    n: number): Promise<SensitivityResult> {
    const response = await fetch(`${this.base}/sensitivity`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ params, index, n }),
    });
    await raiseForStatus(response);
    return response.json();
  }
}
