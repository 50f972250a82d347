// Payload shapes of the project HTTP API.

export type Decision = 'included' | 'excluded' | 'deferred';

export interface CorpusDoc {
  id: string;
  title: string;
  year: number | null;
  venue: string | null;
  doi: string | null;
  decision: Decision;
  has_text: boolean;
}

export interface SimilarDoc {
  id: string;
  similarity: number;
}

export interface DocumentDetail extends Omit<CorpusDoc, 'has_text'> {
  authors: string[];
  keywords: string[];
  chapters: { heading: string; level: number }[];
  rq_scores: Record<string, number>;
  similar: SimilarDoc[];
}

export interface RqKeyword {
  raw: string;
  term: string;
  weight: number;
  synonyms: string[];
  context: string[];
}

export interface ResearchQuestion {
  id: string;
  text: string;
  scope: string;
  perspective: string;
  keywords: RqKeyword[];
}

export interface RankingRow {
  doc_id: string;
  score: number;
  rank: number;
  contributions: [string, number][];
}

export interface RankingsResponse {
  rq_id: string;
  alpha: number;
  rankings: RankingRow[];
}

export interface GraphNode {
  id: string;
  label: string;
  relevance: Record<string, number>;
  avg_relevance: number;
}

export interface GraphLink {
  source: string;
  target: string;
  similarity: number;
}

export interface GraphPayload {
  space: string;
  nodes: GraphNode[];
  links: GraphLink[];
}

export interface DecisionRecord {
  doc_id: string;
  decision: Decision;
  source: string;
  actor: string;
  timestamp: string;
  note: string;
}
