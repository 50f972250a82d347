import { ApiClient, ApiError } from './api.js';
import type {
  CorpusDoc, Decision, GraphPayload, RankingRow, ResearchQuestion,
} from './types.js';

export interface QueueEntry {
  docId: string;
  score: number;
  contributions: [string, number][];
}

export interface PendingDecision {
  docId: string;
  decision: Decision;
  note: string;
}

/**
 * Holds no authoritative state: everything here reconstructs from the API
 * alone via load(). The only session-local bit is the defer tail, which is
 * presentation order (a deferred document stays undecided server-side and
 * simply moves to the back of the reviewer's queue).
 */
export class AppStore {
  corpus = new Map<string, CorpusDoc>();
  rqs: ResearchQuestion[] = [];
  rankings = new Map<string, RankingRow[]>();
  graph: GraphPayload = { space: 'tfidf', nodes: [], links: [] };
  selectedRq = '';
  selectedChannel = 'average';
  deferTail: string[] = [];
  weightErrors = new Map<string, string>();
  pendingRetry: PendingDecision | null = null;
  lastError = '';

  constructor(private api: ApiClient) {}

  async load(): Promise<void> {
    const [corpus, rqs, graph] = await Promise.all([
      this.api.getCorpus(), this.api.getRqs(), this.api.getGraph(),
    ]);
    this.corpus = new Map(corpus.map((d) => [d.id, d]));
    this.rqs = rqs;
    this.graph = graph;
    if (!this.selectedRq || !rqs.some((rq) => rq.id === this.selectedRq)) {
      this.selectedRq = rqs[0]?.id ?? '';
    }
    this.rankings = new Map();
    for (const rq of rqs) {
      const response = await this.api.getRankings(rq.id);
      this.rankings.set(rq.id, response.rankings);
    }
    this.deferTail = [];
    this.weightErrors.clear();
    this.pendingRetry = null;
    this.lastError = '';
  }

  rq(rqId: string): ResearchQuestion | undefined {
    return this.rqs.find((rq) => rq.id === rqId);
  }

  isUndecided(docId: string): boolean {
    return (this.corpus.get(docId)?.decision ?? 'deferred') === 'deferred';
  }

  /** Undecided documents in ranking order; deferred-this-session docs sink to the end. */
  queue(): QueueEntry[] {
    const rows = this.rankings.get(this.selectedRq) ?? [];
    const tail = new Set(this.deferTail);
    const head: QueueEntry[] = [];
    const byId = new Map<string, QueueEntry>();
    for (const row of rows) {
      if (!this.isUndecided(row.doc_id)) continue;
      const entry = { docId: row.doc_id, score: row.score, contributions: row.contributions };
      byId.set(row.doc_id, entry);
      if (!tail.has(row.doc_id)) head.push(entry);
    }
    const tailEntries = this.deferTail
      .map((id) => byId.get(id))
      .filter((e): e is QueueEntry => e !== undefined);
    return [...head, ...tailEntries];
  }

  currentDocId(): string | null {
    return this.queue()[0]?.docId ?? null;
  }

  /**
   * POST the decision; on success the document leaves the queue (or moves to
   * its end when deferred). A 409 keeps the attempt for a retry prompt; any
   * other failure surfaces the API message verbatim.
   */
  async decide(docId: string, decision: Decision, note = ''): Promise<boolean> {
    try {
      const record = await this.api.postDecision(docId, decision, note);
      const doc = this.corpus.get(docId);
      if (doc) doc.decision = record.decision;
      this.deferTail = this.deferTail.filter((id) => id !== docId);
      if (record.decision === 'deferred') this.deferTail.push(docId);
      this.pendingRetry = null;
      this.lastError = '';
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.pendingRetry = { docId, decision, note };
        this.lastError = err.detail;
        return false;
      }
      this.lastError = err instanceof ApiError ? err.detail : String(err);
      return false;
    }
  }

  async retryPending(): Promise<boolean> {
    if (!this.pendingRetry) return false;
    const { docId, decision, note } = this.pendingRetry;
    return this.decide(docId, decision, note);
  }

  /**
   * Client-side mirror of the server invariant: non-positive weights never
   * leave the browser. On success the ranking for that question is refetched
   * and the queue re-sorts.
   */
  async editWeights(rqId: string, weights: Record<string, number>): Promise<boolean> {
    this.weightErrors.clear();
    for (const [keyword, weight] of Object.entries(weights)) {
      if (!Number.isFinite(weight) || weight <= 0) {
        this.weightErrors.set(keyword, `weight must be positive, got ${weight}`);
      }
    }
    if (this.weightErrors.size > 0) return false;
    try {
      await this.api.putWeights(rqId, weights);
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        const keyword = Object.keys(weights).find((k) => err.detail.includes(`'${k}'`));
        this.weightErrors.set(keyword ?? '', err.detail);
        return false;
      }
      this.lastError = err instanceof ApiError ? err.detail : String(err);
      return false;
    }
    const response = await this.api.getRankings(rqId);
    this.rankings.set(rqId, response.rankings);
    const rq = this.rq(rqId);
    if (rq) {
      for (const kw of rq.keywords) {
        const next = weights[kw.raw];
        if (next !== undefined) kw.weight = next;
      }
    }
    return true;
  }
}
