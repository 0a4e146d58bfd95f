import { describe, expect, it } from "vitest";

import {
  applyQueuePage,
  initialState,
  markConflict,
  moveSelection,
  removeItem,
  selectedItem,
} from "../src/state.js";
import type { QueuePage, ReviewItem } from "../src/types.js";

function item(id: string): ReviewItem {
  return {
    item_id: id,
    stake_id: id.split("::")[0]!,
    sys_id: "Y1",
    stakeholder_text: "stake",
    system_condition_text: "sys",
    condition_side: "Mature",
    shared_message_tokens: [],
    vote_share: 1,
    explanation: null,
    status: "Pending",
    decided_by: null,
    decided_at: null,
  };
}

function page(ids: string[], version = 1): QueuePage {
  return {
    items: ids.map(item),
    page: 1,
    page_size: 50,
    total: ids.length,
    store_version: version,
  };
}

describe("queue state", () => {
  it("applies a service page verbatim, preserving order", () => {
    const state = applyQueuePage(initialState(), page(["b::Y1", "a::Y1", "c::Y1"], 7));
    expect(state.items.map((i) => i.item_id)).toEqual(["b::Y1", "a::Y1", "c::Y1"]);
    expect(state.storeVersion).toBe(7);
    expect(state.offline).toBe(false);
  });

  it("optimistically removes a decided card", () => {
    let state = applyQueuePage(initialState(), page(["a::Y1", "b::Y1"]));
    state = removeItem(state, "a::Y1");
    expect(state.items.map((i) => i.item_id)).toEqual(["b::Y1"]);
    expect(state.total).toBe(1);
  });

  it("clamps the selection after removal", () => {
    let state = applyQueuePage(initialState(), page(["a::Y1", "b::Y1"]));
    state = moveSelection(state, 1);
    state = removeItem(state, "b::Y1");
    expect(state.selected).toBe(0);
    expect(selectedItem(state)?.item_id).toBe("a::Y1");
  });

  it("marks conflicts with a notice naming the item", () => {
    let state = applyQueuePage(initialState(), page(["a::Y1"]));
    state = markConflict(state, "a::Y1", "bob");
    expect(state.items).toEqual([]);
    expect(state.notice).toContain("a::Y1");
    expect(state.notice).toContain("bob");
  });

  it("selection never leaves the list bounds", () => {
    let state = applyQueuePage(initialState(), page(["a::Y1", "b::Y1"]));
    state = moveSelection(state, -5);
    expect(state.selected).toBe(0);
    state = moveSelection(state, 99);
    expect(state.selected).toBe(1);
  });

  it("empty queue yields no selected item", () => {
    const state = applyQueuePage(initialState(), page([]));
    expect(selectedItem(state)).toBeUndefined();
  });
});
