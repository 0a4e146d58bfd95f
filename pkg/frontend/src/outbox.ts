// Offline decision outbox. A decision that cannot reach the service is
// queued here and retried; it is never silently dropped, surviving page
// reloads through the provided storage. Delivery is exactly-once per item
// because the queue is keyed by item id and the service's once-only
// decision rule rejects duplicates as conflicts.

import { ConflictError, ServiceUnreachableError } from "./api.js";
import type { Decision } from "./types.js";

export interface PendingDecision {
  item_id: string;
  decision: Decision;
  reviewer: string;
  attempts: number;
}

export type DeliveryOutcome = "delivered" | "conflict";
export type DeliverFn = (pending: PendingDecision) => Promise<DeliveryOutcome>;

/** The subset of the DOM Storage interface the outbox needs. */
export interface OutboxStorage {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export interface FlushReport {
  delivered: string[];
  conflicts: string[];
  remaining: number;
}

const STORAGE_KEY = "tracelink.outbox";

export class DecisionOutbox {
  private readonly queue = new Map<string, PendingDecision>();

  constructor(
    private readonly deliver: DeliverFn,
    private readonly storage?: OutboxStorage,
  ) {
    if (storage) {
      try {
        const raw = storage.getItem(STORAGE_KEY);
        for (const entry of raw ? (JSON.parse(raw) as PendingDecision[]) : []) {
          this.queue.set(entry.item_id, entry);
        }
      } catch {
        // Unreadable persisted state: start empty rather than crash.
      }
    }
  }

  private persist(): void {
    this.storage?.setItem(STORAGE_KEY, JSON.stringify(this.pending()));
  }

  /** Queue a decision; a second decision for the same item is ignored. */
  enqueue(itemId: string, decision: Decision, reviewer: string): boolean {
    if (this.queue.has(itemId)) {
      return false;
    }
    this.queue.set(itemId, { item_id: itemId, decision, reviewer, attempts: 0 });
    this.persist();
    return true;
  }

  get size(): number {
    return this.queue.size;
  }

  pending(): PendingDecision[] {
    return [...this.queue.values()];
  }

  /**
   * Attempt delivery of everything queued, in insertion order. Unreachable
   * service stops the flush (the rest will be retried later); a conflict
   * removes the entry — the item was decided elsewhere and retrying would
   * never succeed.
   */
  async flush(): Promise<FlushReport> {
    const report: FlushReport = { delivered: [], conflicts: [], remaining: 0 };
    for (const entry of [...this.queue.values()]) {
      entry.attempts += 1;
      try {
        const outcome = await this.deliver(entry);
        this.queue.delete(entry.item_id);
        if (outcome === "delivered") {
          report.delivered.push(entry.item_id);
        } else {
          report.conflicts.push(entry.item_id);
        }
      } catch (error) {
        if (error instanceof ConflictError) {
          this.queue.delete(entry.item_id);
          report.conflicts.push(entry.item_id);
          continue;
        }
        if (error instanceof ServiceUnreachableError) {
          break;
        }
        this.persist();
        throw error;
      }
    }
    this.persist();
    report.remaining = this.queue.size;
    return report;
  }
}
