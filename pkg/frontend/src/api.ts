/**
 * Typed client for the curation review service API.
 *
 * The fetch implementation is injectable so tests can count requests or
 * stand in a fake service; the default binds the global fetch.
 */

export interface ReviewItemDto {
  item_id: string;
  kind: 'ocr' | 'translation';
  source_ref: string;
  candidate_text: string;
  status: 'pending' | 'accepted' | 'edited' | 'rejected';
  edited_text: string | null;
  reviewer_note: string | null;
}

export interface LeaseDto {
  token: string;
  reviewer: string;
  /** epoch seconds */
  expires_at: number;
}

export interface NextResponse {
  item: ReviewItemDto | null;
  lease: LeaseDto | null;
}

export interface StatsDto {
  pending: number;
  accepted: number;
  edited: number;
  rejected: number;
  leased: number;
  total: number;
}

export interface ExportedFragment {
  item_id: string;
  kind: string;
  source_ref: string;
  text: string;
  status: string;
}

export type Decision = 'accept' | 'edit' | 'reject';

export interface DecisionBody {
  decision: Decision;
  reviewer: string;
  edited_text?: string;
  note?: string;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(`service error ${status}: ${detail}`);
  }
}

export class ReviewApi {
  private readonly fetchImpl: FetchLike;

  constructor(
    private readonly baseUrl: string = '',
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
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

  nextItem(reviewer: string): Promise<NextResponse> {
    return this.request<NextResponse>(
      `/api/queue/next?reviewer=${encodeURIComponent(reviewer)}`,
    );
  }

  submitDecision(itemId: string, body: DecisionBody): Promise<ReviewItemDto> {
    return this.request<ReviewItemDto>(
      `/api/items/${encodeURIComponent(itemId)}/decision`,
      {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify(body),
      },
    );
  }

  stats(): Promise<StatsDto> {
    return this.request<StatsDto>('/api/stats');
  }

  exportReviewed(): Promise<{ items: ExportedFragment[] }> {
    return this.request<{ items: ExportedFragment[] }>('/api/export');
  }
}
