// Wire types mirroring the study service responses.

export type Birads = "2" | "3" | "4A" | "4B" | "4C" | "5";

export const BIRADS_SCORES: Birads[] = ["2", "3", "4A", "4B", "4C", "5"];

export interface SessionInfo {
  session_id: string;
  order: string[];
  total: number;
}

export interface ExpertReadWire {
  c: number;
  selected: boolean;
  y?: number;
}

export interface TraceWire {
  y_base: number;
  experts: Record<string, ExpertReadWire>;
  y_combined: number;
}

export interface AiPrediction {
  lesion_id: string;
  p_hat: number;
  views: TraceWire[];
}

export interface CasePacket {
  done?: boolean;
  case_id?: string;
  stage: number;
  index?: number;
  total: number;
  image_url?: string;
  aux?: { device: string; lesion_area: number[]; note: string };
  ai?: AiPrediction;
}

export interface StageMetrics {
  stage: number;
  n_reads: number;
  sensitivity: number | null;
  specificity: number | null;
}

export interface SessionMetrics {
  session_id: string;
  reader_id: string;
  total_cases: number;
  stage1?: StageMetrics;
  stage2?: StageMetrics;
  delta?: { sensitivity: number | null; specificity: number | null };
  error?: string;
}

export interface SessionState {
  session_id: string;
  reader_id: string;
  total: number;
  stage1_done: number;
  stage2_done: number;
}
