// Wire types mirroring the service's request/response bodies.

export type ReviewStatus = "Pending" | "Accepted" | "Rejected";

export interface ReviewItem {
  item_id: string;
  stake_id: string;
  sys_id: string;
  stakeholder_text: string;
  system_condition_text: string;
  condition_side: string;
  shared_message_tokens: string[];
  vote_share: number;
  explanation: string | null;
  status: ReviewStatus;
  decided_by: string | null;
  decided_at: number | null;
}

export interface QueuePage {
  items: ReviewItem[];
  page: number;
  page_size: number;
  total: number;
  store_version: number;
}

export interface QueueFilters {
  status?: ReviewStatus;
  variation?: string;
  min_vote_share?: number;
}

export type Decision = "accept" | "reject";

export interface DecisionResult {
  item_id: string;
  status: ReviewStatus;
  store_version: number;
}

export interface ValidateResult {
  decision: "Yes" | "No";
  explanation: string | null;
  retrieved_example_ids: string[];
  strategy: string;
  store_version: number;
  yes_votes: number | null;
  no_votes: number | null;
}

export interface Health {
  status: string;
  store_version: number;
  provider_id: string;
}

export interface FunnelCounts {
  total_candidates: number;
  after_stage1: number;
  after_stage2: number;
  after_stage3: number;
  predicted_valid: number;
  drop_reasons: Record<string, number>;
  skipped: number;
}

export interface JobStatus {
  job_id: string;
  state: "pending" | "running" | "done" | "failed";
  done: number;
  total: number;
  funnel: FunnelCounts | null;
  recovered: number;
  queued_items: number;
  error: string | null;
}

export interface MetricsSnapshot {
  store_version: number;
  pending: number;
  accepted: number;
  rejected: number;
  predicted: number;
  confirmed: number;
  correctness: number | null;
}
