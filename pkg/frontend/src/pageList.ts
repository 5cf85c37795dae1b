// Left panel: page previews in the exact order the server returned them
// (impact first, then easy, then ascending confidence -- never re-sorted
// client-side), with confidence, template id, red/yellow tags, and a
// checkmark once labelled.

import type { PageSummary } from "./api.js";

export function renderPageList(
  container: HTMLElement,
  pages: PageSummary[],
  selected: string | null,
  onSelect: (pageId: string) => void,
): void {
  const doc = container.ownerDocument;
  container.textContent = "";
  for (const page of pages) {
    const item = doc.createElement("div");
    item.className = "page-item" + (page.page_id === selected ? " active" : "");
    item.dataset.pageId = page.page_id;

    const title = doc.createElement("div");
    title.className = "page-title";
    title.textContent = page.page_id;
    if (page.labelled) {
      const check = doc.createElement("span");
      check.className = "labelled-check";
      check.textContent = page.label_status === "submitted" ? " ✓✓" : " ✓";
      title.appendChild(check);
    }
    item.appendChild(title);

    const meta = doc.createElement("div");
    meta.className = "page-meta";
    const conf = page.confidence === null ? "no tables" : `conf ${page.confidence.toFixed(3)}`;
    const template = page.template_id === null ? "" : ` · template ${page.template_id}`;
    meta.textContent = `${conf}${template} · ${page.table_count} table(s)`;
    item.appendChild(meta);

    if (page.recommendation) {
      const tag = doc.createElement("span");
      // red flags the high-impact page, yellow the easy confirmation
      tag.className = `tag ${page.recommendation === "impact" ? "red" : "yellow"}`;
      tag.textContent = page.recommendation;
      item.appendChild(tag);
    }

    item.addEventListener("click", () => onSelect(page.page_id));
    container.appendChild(item);
  }
}
