import type {
  CorpusDoc, Decision, DecisionRecord, DocumentDetail, GraphPayload,
  RankingsResponse, ResearchQuestion,
} from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(detail);
  }
}

async function fail(response: Response): Promise<never> {
  let detail = `${response.status}`;
  try {
    const body = await response.json();
    if (body && typeof body.detail === 'string') detail = body.detail;
  } catch {
    // keep the status code as the message
  }
  throw new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(
    private baseUrl = '',
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { 'content-type': 'application/json' } };
    if (body !== undefined) init.body = JSON.stringify(body);
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) await fail(response);
    return response.json() as Promise<T>;
  }

  getCorpus(): Promise<CorpusDoc[]> {
    return this.request('GET', '/corpus');
  }

  getDocument(id: string): Promise<DocumentDetail> {
    return this.request('GET', `/documents/${encodeURIComponent(id)}`);
  }

  getRqs(): Promise<ResearchQuestion[]> {
    return this.request('GET', '/rqs');
  }

  putWeights(rqId: string, weights: Record<string, number>): Promise<ResearchQuestion> {
    return this.request('PUT', `/rqs/${encodeURIComponent(rqId)}`, { weights });
  }

  getRankings(rqId: string): Promise<RankingsResponse> {
    return this.request('GET', `/rankings/${encodeURIComponent(rqId)}`);
  }

  postDecision(docId: string, decision: Decision, note: string, actor = 'ui'): Promise<DecisionRecord> {
    return this.request('POST', '/decisions', { doc_id: docId, decision, note, actor });
  }

  getGraph(): Promise<GraphPayload> {
    return this.request('GET', '/graph');
  }
}
