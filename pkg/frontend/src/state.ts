// Queue view state. Items are kept exactly as the service sent them; the
// only client-side mutations are optimistic removal after a submitted
// decision and selection movement.

import type { QueuePage, ReviewItem } from "./types.js";

export interface QueueState {
  items: ReviewItem[];
  selected: number;
  total: number;
  storeVersion: number;
  offline: boolean;
  notice: string | null;
}

export function initialState(): QueueState {
  return { items: [], selected: 0, total: 0, storeVersion: 0, offline: false, notice: null };
}

function clampSelection(state: QueueState): QueueState {
  const selected = Math.min(Math.max(state.selected, 0), Math.max(state.items.length - 1, 0));
  return { ...state, selected };
}

/** Replace the view with a service page, verbatim and in service order. */
export function applyQueuePage(state: QueueState, page: QueuePage): QueueState {
  return clampSelection({
    ...state,
    items: page.items,
    total: page.total,
    storeVersion: page.store_version,
    offline: false,
  });
}

/** Remove a card immediately after its decision was submitted or queued. */
export function removeItem(state: QueueState, itemId: string): QueueState {
  const items = state.items.filter((item) => item.item_id !== itemId);
  return clampSelection({ ...state, items, total: Math.max(state.total - 1, items.length) });
}

/** A decision conflicted: the item was settled by someone else. */
export function markConflict(state: QueueState, itemId: string, decidedBy: string | null): QueueState {
  const who = decidedBy ?? "another reviewer";
  return {
    ...removeItem(state, itemId),
    notice: `${itemId} was already decided by ${who}`,
  };
}

export function setOffline(state: QueueState, offline: boolean): QueueState {
  return { ...state, offline };
}

export function setNotice(state: QueueState, notice: string | null): QueueState {
  return { ...state, notice };
}

export function moveSelection(state: QueueState, delta: number): QueueState {
  return clampSelection({ ...state, selected: state.selected + delta });
}

export function selectedItem(state: QueueState): ReviewItem | undefined {
  return state.items[state.selected];
}
