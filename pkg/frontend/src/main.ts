// Browser entry point: minimal DOM shell around the Player.
// Usage: index.html?api=http://host:8080&project=<project-id>

import { PlayerApi } from "./api.js";
import { flushPending, IntegrityFailure, Player } from "./player.js";
import { browserStorage, PendingStore } from "./storage.js";
import type { PlayerState } from "./state.js";

const root = document.getElementById("app")!;

function el(tag: string, attrs: Record<string, string> = {}, text = ""): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text) node.textContent = text;
  return node;
}

function screen(...children: (HTMLElement | string)[]): void {
  root.replaceChildren(...children.map((c) => (typeof c === "string" ? el("p", {}, c) : c)));
}

function assetUrl(player: Player, ref: string): string {
  const bytes = player.state.pkg!.assets.get(ref)!;
  const copy = new Uint8Array(bytes); // detach from the package buffer
  return URL.createObjectURL(new Blob([copy.buffer]));
}

function renderItem(player: Player): void {
  const step = player.current();
  if (step === null) return;
  const { test, item } = step;
  const progress = `${player.state.cursor + 1} / ${player.state.presentation.length}`;
  const container = el("div", { class: "item" });
  container.append(el("div", { class: "progress" }, `${test.title} — ${progress}`));
  if (item.asset_ref) {
    container.append(el("img", { src: assetUrl(player, item.asset_ref), class: "stimulus" }));
  }
  container.append(el("h2", {}, item.prompt));

  const submit = (value: unknown) => {
    player.answer(value);
    if (player.state.phase === "finished") {
      void upload(player);
    } else {
      renderItem(player);
    }
  };

  if (item.kind === "free_text") {
    const input = el("textarea", { rows: "4", cols: "50" }) as HTMLTextAreaElement;
    const button = el("button", {}, "Continue");
    button.addEventListener("click", () => submit(input.value));
    container.append(input, button);
  } else if (item.kind === "multi_choice") {
    const boxes: HTMLInputElement[] = [];
    (item.options ?? []).forEach((option, index) => {
      const label = el("label", { class: "option" });
      const box = el("input", { type: "checkbox", value: String(index) }) as HTMLInputElement;
      boxes.push(box);
      label.append(box, option);
      container.append(label);
    });
    const button = el("button", {}, "Continue");
    button.addEventListener("click", () =>
      submit(boxes.flatMap((box, index) => (box.checked ? [index] : []))),
    );
    container.append(button);
  } else if (item.kind === "single_choice" || item.kind === "likert") {
    (item.options ?? []).forEach((option, index) => {
      const button = el("button", { class: "option" }, option);
      button.addEventListener("click", () => submit(index));
      container.append(button);
    });
  } else {
    const button = el("button", {}, "Respond");
    button.addEventListener("click", () => submit(null));
    container.append(button);
  }

  screen(container);
  // the latency window opens when the item is actually painted
  requestAnimationFrame(() => player.markShown());
}

async function upload(player: Player): Promise<void> {
  screen("Uploading results…");
  const report = await player.finishAndUpload();
  renderOutcome(player, report !== null);
}

function renderOutcome(player: Player, ok: boolean): void {
  if (ok) {
    const accepted = player.state.uploadReport?.accepted ?? 0;
    screen(el("h2", {}, "Done"), `Thank you! ${accepted} responses were recorded.`);
    return;
  }
  const retry = el("button", {}, "Retry upload");
  retry.addEventListener("click", () => {
    void (async () => {
      screen("Uploading results…");
      const report = await player.retryUpload();
      renderOutcome(player, report !== null);
    })();
  });
  screen(
    el("h2", {}, "Upload failed"),
    "Your answers are saved on this device and nothing was lost. " +
      "Reconnect to the network and retry.",
    retry,
  );
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const api = params.get("api") ?? location.origin;
  const projectId = params.get("project");
  if (!projectId) {
    screen(el("h2", {}, "Missing project"), "Open this page as index.html?project=<project-id>&api=<server>");
    return;
  }
  const playerApi = new PlayerApi(api);
  const storage = new PendingStore(browserStorage());
  const player = new Player(playerApi, {
    storage,
    clientInfo: {
      user_agent: navigator.userAgent,
      screen: `${window.screen.width}x${window.screen.height}`,
    },
  });

  // deliver any sessions stranded by earlier network failures
  void flushPending(playerApi, storage);

  screen("Loading test package…");
  try {
    await player.load(projectId);
  } catch (error) {
    if (error instanceof IntegrityFailure) {
      screen(el("h2", {}, "Package integrity check failed"),
        "The downloaded package is damaged; the test cannot start.");
    } else {
      const retry = el("button", {}, "Retry");
      retry.addEventListener("click", () => void boot());
      screen(el("h2", {}, "Could not load the test"), String(error), retry);
    }
    return;
  }

  const pkg = player.state.pkg!;
  const start = el("button", {}, "Start");
  start.addEventListener("click", () => {
    player.start();
    renderItem(player);
  });
  screen(
    el("h2", {}, pkg.manifest.description || "Test battery"),
    `${pkg.tests.length} test(s), ${player.state.presentation.length} items. ` +
      "Once loaded, the battery runs entirely offline; answers upload at the end.",
    start,
  );
}

void boot();
