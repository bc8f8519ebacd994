// Typed client for the rating service. This is the UI's only backend.

export interface SessionState {
  subject_id: string;
  subset_index: number;
  subset_size: number;
  cursor: number;
  completed: boolean;
  done_overall: number;
  total_assets: number;
}

export interface SessionItem {
  asset_id: string;
  prompt: string;
  video_url: string;
  index: number;
  subset_size: number;
  existing_rating: [number, number, number] | null;
}

export interface Scores {
  q: number;
  a: number;
  c: number;
}

export interface SubmitAck {
  status: string;
  kind: 'rating' | 'overwrite';
  session: SessionState;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

/** Network-level failure (server unreachable); retryable, unlike ApiError. */
export class NetworkError extends Error {}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(url, init);
  } catch (err) {
    throw new NetworkError(String(err));
  }
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private baseUrl: string = '') {}

  getSession(subjectId: string): Promise<SessionState> {
    return request(`${this.baseUrl}/session/${encodeURIComponent(subjectId)}`);
  }

  getCurrent(subjectId: string): Promise<SessionItem> {
    return request(`${this.baseUrl}/session/${encodeURIComponent(subjectId)}/current`);
  }

  getPrevious(subjectId: string): Promise<SessionItem> {
    return request(`${this.baseUrl}/session/${encodeURIComponent(subjectId)}/previous`);
  }

  submitRating(subjectId: string, assetId: string, scores: Scores): Promise<SubmitAck> {
    return request(`${this.baseUrl}/session/${encodeURIComponent(subjectId)}/rating`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ asset_id: assetId, ...scores }),
    });
  }

  mediaUrl(videoUrl: string): string {
    return `${this.baseUrl}${videoUrl}`;
  }
}
