/** Typed client for the pairwise rating HTTP API.
 *
 * The payloads deliberately contain nothing but ids, counts and
 * content-hash image URLs; raters never see where an image came from.
 */

export interface SessionView {
  id: string;
  n_pairs: number;
  n_rated_by: Record<string, number>;
}

export interface PairView {
  pair_id: string;
  left_image_url: string;
  right_image_url: string;
}

export interface SessionComplete {
  complete: true;
  n_rated: number;
}

export type NextResponse = PairView | SessionComplete;

export type Choice = 'left' | 'right' | 'skip';

export interface RatingBody {
  pair_id: string;
  rater: string;
  choice: Choice;
  elapsed_ms: number;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export function isComplete(r: NextResponse): r is SessionComplete {
  return (r as SessionComplete).complete === true;
}

export class RatingApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  imageUrl(path: string): string {
    return this.baseUrl + path;
  }

  async listSessions(): Promise<SessionView[]> {
    return this.getJson(`${this.baseUrl}/api/sessions`);
  }

  async nextPair(sessionId: string, rater: string): Promise<NextResponse> {
    const q = encodeURIComponent(rater);
    return this.getJson(`${this.baseUrl}/api/sessions/${sessionId}/next?rater=${q}`);
  }

  async postRating(sessionId: string, body: RatingBody): Promise<void> {
    const res = await this.fetchImpl(`${this.baseUrl}/api/sessions/${sessionId}/ratings`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!res.ok) {
      throw new ApiError(res.status, `rating rejected with status ${res.status}`);
    }
  }

  async report(sessionId: string): Promise<unknown> {
    return this.getJson(`${this.baseUrl}/api/sessions/${sessionId}/report`);
  }

  private async getJson<T>(url: string): Promise<T> {
    const res = await this.fetchImpl(url);
    if (!res.ok) {
      throw new ApiError(res.status, `request failed with status ${res.status}`);
    }
    return (await res.json()) as T;
  }
}
