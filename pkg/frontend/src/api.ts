/** Typed client for the review service JSON API. */

export interface SessionInfo {
  labels: string[];
  sample_size: number;
  progress: number;
  done: boolean;
}

export interface ReviewItem {
  sampled_index: number;
  character: string;
  action: string;
  trait: string;
  llm_rating: number;
  chunk_index: number;
  chunk_text: string;
  overlap_context: string;
}

export interface LabelStats {
  label: string;
  count: number;
  proportion: number;
  ci_low: number;
  ci_high: number;
}

export interface QualityReport {
  n: number;
  mass: number;
  labels: LabelStats[];
  exact_match_rate?: number;
  mean_abs_deviation?: number;
}

export interface ProgressInfo {
  progress: number;
  sample_size: number;
  done: boolean;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, init);
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    const detail = (body as { error?: string }).error ?? response.statusText;
    throw new ApiError(response.status, detail);
  }
  return body as T;
}

export class ReviewApi {
  constructor(private readonly base: string = "") {}

  session(): Promise<SessionInfo> {
    return request<SessionInfo>(`${this.base}/api/session`);
  }

  next(): Promise<ReviewItem> {
    return request<ReviewItem>(`${this.base}/api/next`);
  }

  label(label: string): Promise<ProgressInfo> {
    return request<ProgressInfo>(`${this.base}/api/label`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ label }),
    });
  }

  undo(): Promise<ProgressInfo> {
    return request<ProgressInfo>(`${this.base}/api/undo`, { method: "POST" });
  }

  report(): Promise<QualityReport> {
    return request<QualityReport>(`${this.base}/api/report`);
  }
}
