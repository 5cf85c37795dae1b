// Control panel: progress counters, finetune button, model selector,
// add-documents upload, annotation download. Job state arrives via the 1s
// progress poll; the finetune button is disabled until at least one page is
// submitted and the project is idle.

import type { ModelPayload, ProgressPayload } from "./api.js";

export interface ControlHandlers {
  finetune(): void;
  selectModel(versionId: string): void;
  uploadFiles(files: FileList): void;
  refresh(): void;
}

export interface ControlView {
  finetuneButton: HTMLButtonElement;
  modelSelect: HTMLSelectElement;
  spinner: HTMLElement;
}

export function renderControlPanel(
  container: HTMLElement,
  progress: ProgressPayload | null,
  models: ModelPayload[],
  activeModel: string | null,
  exportUrl: string | null,
  handlers: ControlHandlers,
): ControlView {
  const doc = container.ownerDocument;
  container.textContent = "";

  const counts = doc.createElement("div");
  counts.className = "progress-counts";
  if (progress) {
    counts.textContent =
      `${progress.pages} pages · ${progress.labelled} labelled · ` +
      `${progress.submitted} submitted · ${progress.recommended_remaining} recommended left`;
  } else {
    counts.textContent = "no project";
  }
  container.appendChild(counts);

  const spinner = doc.createElement("span");
  spinner.className = "spinner";
  const busy = progress !== null && progress.job_state !== "idle";
  spinner.hidden = !busy;
  spinner.textContent = busy
    ? ` ${progress!.job_state} ${(progress!.job_progress * 100).toFixed(0)}%`
    : "";
  container.appendChild(spinner);

  const finetuneButton = doc.createElement("button");
  finetuneButton.className = "finetune";
  finetuneButton.textContent = "Finetune from labels";
  finetuneButton.disabled = !progress || progress.submitted < 1 || progress.job_state !== "idle";
  finetuneButton.addEventListener("click", () => handlers.finetune());
  container.appendChild(finetuneButton);

  const modelSelect = doc.createElement("select");
  modelSelect.className = "model-select";
  for (const model of models) {
    const option = doc.createElement("option");
    option.value = model.version_id;
    option.textContent = model.parent_id
      ? `${model.version_id} (from ${model.parent_id})`
      : model.version_id;
    option.selected = model.version_id === activeModel;
    modelSelect.appendChild(option);
  }
  modelSelect.disabled = busy;
  modelSelect.addEventListener("change", () => handlers.selectModel(modelSelect.value));
  container.appendChild(modelSelect);

  const upload = doc.createElement("input");
  upload.type = "file";
  upload.multiple = true;
  upload.accept = "application/json";
  upload.disabled = busy;
  upload.addEventListener("change", () => {
    if (upload.files && upload.files.length) {
      handlers.uploadFiles(upload.files);
    }
  });
  container.appendChild(upload);

  if (exportUrl) {
    const link = doc.createElement("a");
    link.href = exportUrl;
    link.textContent = "Download annotations";
    link.setAttribute("download", "annotations.zip");
    container.appendChild(link);
  }

  return { finetuneButton, modelSelect, spinner };
}
