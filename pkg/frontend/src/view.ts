/** DOM rendering for the review screens. Every displayed number comes from
 * the server; this module only formats. */

import type { QualityReport, ReviewItem } from "./api.js";

export interface ReviewHandlers {
  onLabel: (label: string) => void;
  onUndo: () => void;
}

/** "0.95 [0.888, 0.978]" -> "95% [89%-98%]" (whole-percent rounding). */
export function formatShare(proportion: number, low: number, high: number): string {
  const pct = (v: number) => `${Math.round(v * 100)}%`;
  return `${pct(proportion)} [${pct(low)}-${pct(high)}]`;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/** Chunk text with every occurrence of the character name wrapped in <mark>. */
function highlightedChunk(text: string, name: string): HTMLElement {
  const container = el("div", "chunk-text");
  if (!name) {
    container.textContent = text;
    return container;
  }
  let position = 0;
  while (position < text.length) {
    const hit = text.indexOf(name, position);
    if (hit < 0) {
      container.appendChild(document.createTextNode(text.slice(position)));
      break;
    }
    if (hit > position) {
      container.appendChild(document.createTextNode(text.slice(position, hit)));
    }
    const mark = el("mark", undefined, name);
    container.appendChild(mark);
    position = hit + name.length;
  }
  return container;
}

export function renderReviewScreen(
  root: HTMLElement,
  item: ReviewItem,
  labels: string[],
  progress: { done: number; total: number },
  numericMode: boolean,
  handlers: ReviewHandlers,
  inlineError?: string,
): void {
  root.replaceChildren();

  const bar = el("div", "progress");
  const fill = el("div", "progress-fill");
  fill.style.width =
    progress.total > 0 ? `${(100 * progress.done) / progress.total}%` : "0%";
  bar.appendChild(fill);
  const counter = el(
    "span",
    "progress-label",
    `${progress.done}/${progress.total}`,
  );
  root.append(bar, counter);

  root.appendChild(highlightedChunk(item.chunk_text, item.character));

  const card = el("section", "annotation-card");
  card.appendChild(el("h2", "character", item.character));
  card.appendChild(el("p", "action", item.action));
  const traitRow = el("p", "trait");
  traitRow.append("Trait: ", el("strong", undefined, item.trait));
  card.appendChild(traitRow);
  if (numericMode) {
    card.appendChild(el("p", "llm-rating", `Model rating: ${item.llm_rating}`));
  }
  root.appendChild(card);

  if (inlineError) {
    root.appendChild(el("p", "inline-error", inlineError));
  }

  const buttons = el("div", "label-buttons");
  labels.forEach((label, index) => {
    const button = el("button", "label-button");
    button.textContent = `${index + 1} · ${label}`;
    button.dataset.label = label;
    button.addEventListener("click", () => handlers.onLabel(label));
    buttons.appendChild(button);
  });
  root.appendChild(buttons);

  const undo = el("button", "undo-button", "Undo (u)");
  undo.disabled = progress.done === 0;
  undo.addEventListener("click", () => handlers.onUndo());
  root.appendChild(undo);

  const hint = el(
    "p",
    "hint",
    `Keys 1-${labels.length} assign a label; u undoes the previous one.`,
  );
  root.appendChild(hint);
}

export function renderReportScreen(root: HTMLElement, report: QualityReport): void {
  root.replaceChildren();
  root.appendChild(el("h1", undefined, "Review complete"));
  root.appendChild(
    el("p", "report-n", `${report.n} annotations reviewed`),
  );

  const table = el("table", "report-table");
  const head = el("tr");
  head.append(el("th", undefined, "Label"), el("th", undefined, "Share [interval]"));
  table.appendChild(head);
  for (const row of report.labels) {
    const tr = el("tr");
    tr.dataset.label = row.label;
    tr.append(
      el("td", undefined, row.label),
      el("td", "share", formatShare(row.proportion, row.ci_low, row.ci_high)),
    );
    table.appendChild(tr);
  }
  root.appendChild(table);

  if (report.exact_match_rate !== undefined) {
    root.appendChild(
      el(
        "p",
        "numeric-extras",
        `Exact match rate: ${report.exact_match_rate} — ` +
          `mean absolute deviation: ${report.mean_abs_deviation}`,
      ),
    );
  }
}

export function renderErrorScreen(
  root: HTMLElement,
  message: string,
  onRetry: () => void,
): void {
  root.replaceChildren();
  const banner = el("div", "error-banner");
  banner.appendChild(el("p", undefined, `Cannot reach the review service: ${message}`));
  const retry = el("button", "retry-button", "Retry");
  retry.addEventListener("click", onRetry);
  banner.appendChild(retry);
  root.appendChild(banner);
}
