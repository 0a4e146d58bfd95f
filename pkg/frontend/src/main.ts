// DOM wiring for the review queue. All decision logic lives on the service;
// this file only renders responses and forwards reviewer actions.

import { ApiClient, ConflictError, ServiceUnreachableError } from "./api.js";
import { parseExplanationSteps } from "./explanation.js";
import { escapeHtml, highlightTokens } from "./highlight.js";
import { resolveTriageCommand } from "./keyboard.js";
import { DecisionOutbox } from "./outbox.js";
import {
  QueueState,
  applyQueuePage,
  initialState,
  markConflict,
  moveSelection,
  removeItem,
  selectedItem,
  setNotice,
  setOffline,
} from "./state.js";
import type { Decision, QueueFilters, ReviewItem } from "./types.js";

const FLUSH_INTERVAL_MS = 5_000;

let state: QueueState = initialState();
let client: ApiClient | null = null;
let reviewer = "";
let filters: QueueFilters = { status: "Pending" };

const outbox = new DecisionOutbox(
  async (pending) => {
    if (!client) throw new ServiceUnreachableError("not connected");
    await client.submitDecision(pending.item_id, pending.decision, pending.reviewer);
    return "delivered";
  },
  typeof localStorage !== "undefined" ? localStorage : undefined,
);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function update(next: QueueState): void {
  state = next;
  render();
}

function renderItem(item: ReviewItem, index: number): string {
  const explanation = item.explanation ? parseExplanationSteps(item.explanation) : null;
  const explanationHtml = explanation
    ? `<ol class="steps">${explanation
        .map((s) => `<li value="${s.number}">${escapeHtml(s.text)}</li>`)
        .join("")}</ol>`
    : item.explanation
      ? `<p class="raw-explanation">${escapeHtml(item.explanation)}</p>`
      : `<p class="raw-explanation muted">no explanation recorded</p>`;
  const selected = index === state.selected ? " selected" : "";
  return `
    <article class="card${selected}" data-item="${escapeHtml(item.item_id)}">
      <header>
        <span class="pair">${escapeHtml(item.stake_id)} &rarr; ${escapeHtml(item.sys_id)}</span>
        <span class="side">${escapeHtml(item.condition_side)} side</span>
        <span class="votes">vote share ${(item.vote_share * 100).toFixed(0)}%</span>
      </header>
      <section class="requirement">
        <h3>Stakeholder requirement</h3>
        <p>${highlightTokens(item.stakeholder_text, item.shared_message_tokens)}</p>
      </section>
      <section class="requirement">
        <h3>System condition (${escapeHtml(item.condition_side.toLowerCase())})</h3>
        <p>${highlightTokens(item.system_condition_text, item.shared_message_tokens)}</p>
      </section>
      <section class="explanation">
        <h3>Model reasoning</h3>
        ${explanationHtml}
      </section>
      <footer>
        <button class="accept" data-decision="accept" data-item="${escapeHtml(item.item_id)}">Accept (a)</button>
        <button class="reject" data-decision="reject" data-item="${escapeHtml(item.item_id)}">Reject (r)</button>
      </footer>
    </article>`;
}

function render(): void {
  el("store-version").textContent = `store v${state.storeVersion}`;
  const banner = el("banner");
  if (state.offline) {
    banner.textContent = `service unreachable - ${outbox.size} decision(s) queued locally, retrying`;
    banner.className = "banner offline";
  } else if (state.notice) {
    banner.textContent = state.notice;
    banner.className = "banner notice";
  } else {
    banner.textContent = "";
    banner.className = "banner hidden";
  }
  const queue = el("queue");
  if (state.items.length === 0) {
    queue.innerHTML = `<p class="empty">Queue is empty - nothing pending review.</p>`;
  } else {
    queue.innerHTML = state.items.map(renderItem).join("\n");
  }
}

async function refreshQueue(): Promise<void> {
  if (!client) return;
  try {
    const page = await client.fetchQueue(filters, 1, 100);
    update(applyQueuePage(state, page));
  } catch (error) {
    if (error instanceof ServiceUnreachableError) {
      update(setOffline(state, true));
      return;
    }
    update(setNotice(state, String(error)));
  }
}

async function decide(itemId: string, decision: Decision): Promise<void> {
  if (!client) return;
  // Optimistic removal; the card never comes back unless the submit conflicts.
  update(removeItem(state, itemId));
  try {
    const result = await client.submitDecision(itemId, decision, reviewer);
    update(setNotice(state, `${itemId} ${result.status} (store v${result.store_version})`));
    state = { ...state, storeVersion: result.store_version };
    render();
  } catch (error) {
    if (error instanceof ConflictError) {
      update(markConflict(state, itemId, null));
      await refreshQueue();
      return;
    }
    if (error instanceof ServiceUnreachableError) {
      outbox.enqueue(itemId, decision, reviewer);
      update(setOffline(state, true));
      return;
    }
    update(setNotice(state, String(error)));
  }
}

async function flushOutbox(): Promise<void> {
  if (outbox.size === 0) return;
  const report = await outbox.flush();
  if (report.delivered.length > 0 || report.conflicts.length > 0) {
    update(setOffline(state, outbox.size > 0));
    await refreshQueue();
  }
}

function bindKeyboard(): void {
  document.addEventListener("keydown", (event) => {
    if (event.target instanceof HTMLInputElement) return;
    const command = resolveTriageCommand(event.key);
    if (!command) return;
    event.preventDefault();
    const current = selectedItem(state);
    switch (command) {
      case "accept":
        if (current) void decide(current.item_id, "accept");
        break;
      case "reject":
        if (current) void decide(current.item_id, "reject");
        break;
      case "skip":
        update(moveSelection(state, 1));
        break;
      case "previous":
        update(moveSelection(state, -1));
        break;
      case "refresh":
        void refreshQueue();
        break;
      case "help":
        update(setNotice(state, "a/y accept - r/n reject - s/j next - k previous - g refresh"));
        break;
    }
  });
}

function bindClicks(): void {
  el("queue").addEventListener("click", (event) => {
    const target = event.target;
    if (!(target instanceof HTMLButtonElement)) return;
    const itemId = target.dataset["item"];
    const decision = target.dataset["decision"] as Decision | undefined;
    if (itemId && decision) void decide(itemId, decision);
  });
  el("refresh").addEventListener("click", () => void refreshQueue());
}

function bindLogin(): void {
  const form = el<HTMLFormElement>("login");
  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    const base = el<HTMLInputElement>("server-url").value.trim().replace(/\/$/, "");
    const token = el<HTMLInputElement>("token").value.trim();
    reviewer = el<HTMLInputElement>("reviewer").value.trim() || "anonymous";
    client = new ApiClient(base, token || null);
    try {
      await client.health();
      el("login-panel").classList.add("hidden");
      el("app-panel").classList.remove("hidden");
      await refreshQueue();
    } catch (error) {
      el("login-error").textContent =
        error instanceof ServiceUnreachableError
          ? "cannot reach the service at that address"
          : String(error);
    }
  });
}

export function start(): void {
  bindLogin();
  bindClicks();
  bindKeyboard();
  window.setInterval(() => void flushOutbox(), FLUSH_INTERVAL_MS);
}

if (typeof document !== "undefined" && document.getElementById("login")) {
  start();
}
