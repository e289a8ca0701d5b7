export type Verdict = 'pending' | 'keep' | 'discard';

export type SpanRole = 'category' | 'attribute' | 'relation';

export interface ExpressionSpan {
  role: SpanRole;
  start: number;
  end: number;
}

export interface Expression {
  category: string;
  attribute: string | null;
  relation: string | null;
  text: string;
  spans: ExpressionSpan[];
}

export interface TripletRecord {
  id: string;
  scene_id: string;
  image_path: string;
  label_path: string;
  mask_path: string;
  expression: Expression;
  split: string;
  foreground_ratio: number;
  verdict: Verdict;
}

export interface TripletPage {
  page: number;
  page_size: number;
  total: number;
  pages: number;
  records: TripletRecord[];
}

export interface SplitCounts {
  pending: number;
  keep: number;
  discard: number;
  total: number;
}

export interface Stats extends SplitCounts {
  splits: Record<string, SplitCounts>;
}

export interface ExportResult {
  path: string;
  records: number;
}

export interface VerdictEvent {
  id: string;
  verdict: Verdict;
  reason?: string;
}
