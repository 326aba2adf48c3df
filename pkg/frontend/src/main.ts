/** Review app: keyboard-first labeling over the local review API.
 *
 * The UI is deliberately pessimistic: the next item renders only after the
 * server acknowledged the previous label (audit integrity over latency),
 * and every displayed statistic is fetched from /api/report.
 */

import { ApiError, ReviewApi, type ReviewItem, type SessionInfo } from "./api.js";
import {
  renderErrorScreen,
  renderReportScreen,
  renderReviewScreen,
} from "./view.js";

type Phase = "loading" | "reviewing" | "finished" | "error";

export class ReviewApp {
  private api: ReviewApi;
  private phase: Phase = "loading";
  private session: SessionInfo | null = null;
  private item: ReviewItem | null = null;
  private busy = false;
  private inlineError: string | undefined;
  /** Resolves when the latest user action fully settled (tests await this). */
  settled: Promise<void> = Promise.resolve();

  constructor(
    private readonly root: HTMLElement,
    baseUrl = "",
  ) {
    this.api = new ReviewApi(baseUrl);
  }

  get currentPhase(): Phase {
    return this.phase;
  }

  async boot(): Promise<void> {
    try {
      this.session = await this.api.session();
      if (this.session.done) {
        await this.finish();
      } else {
        this.item = await this.api.next();
        this.phase = "reviewing";
      }
    } catch (error) {
      this.phase = "error";
      renderErrorScreen(this.root, describe(error), () => {
        this.settled = this.boot();
      });
      return;
    }
    this.render();
  }

  attachKeyboard(target: GlobalEventHandlers = window): void {
    target.addEventListener("keydown", (event: KeyboardEvent) => {
      if (this.phase !== "reviewing" || this.session === null) return;
      if (event.key === "u") {
        event.preventDefault();
        this.settled = this.undo();
        return;
      }
      const index = Number.parseInt(event.key, 10);
      if (Number.isInteger(index) && index >= 1 && index <= this.session.labels.length) {
        event.preventDefault();
        this.settled = this.submit(this.session.labels[index - 1]);
      }
    });
  }

  async submit(label: string): Promise<void> {
    if (this.busy || this.phase !== "reviewing" || this.session === null) return;
    this.busy = true;
    try {
      const progress = await this.api.label(label);
      this.session.progress = progress.progress;
      this.inlineError = undefined;
      if (progress.done) {
        await this.finish();
      } else {
        this.item = await this.api.next();
      }
    } catch (error) {
      if (error instanceof ApiError && error.status === 400) {
        this.inlineError = error.message; // same item stays on screen
      } else {
        this.phase = "error";
        renderErrorScreen(this.root, describe(error), () => {
          this.settled = this.boot();
        });
        return;
      }
    } finally {
      this.busy = false;
    }
    this.render();
  }

  async undo(): Promise<void> {
    if (this.busy || this.phase !== "reviewing" || this.session === null) return;
    if (this.session.progress === 0) return;
    this.busy = true;
    try {
      const progress = await this.api.undo();
      this.session.progress = progress.progress;
      this.item = await this.api.next();
    } catch (error) {
      this.phase = "error";
      renderErrorScreen(this.root, describe(error), () => {
        this.settled = this.boot();
      });
      return;
    } finally {
      this.busy = false;
    }
    this.render();
  }

  private async finish(): Promise<void> {
    try {
      const report = await this.api.report();
      this.phase = "finished";
      renderReportScreen(this.root, report);
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        // not actually complete; go back to reviewing
        this.item = await this.api.next();
        this.phase = "reviewing";
        this.render();
        return;
      }
      throw error;
    }
  }

  private render(): void {
    if (this.phase !== "reviewing" || this.session === null || this.item === null) {
      return;
    }
    const numericMode = this.session.labels.every(
      (label) => label.trim() !== "" && Number.isInteger(Number(label)),
    );
    renderReviewScreen(
      this.root,
      this.item,
      this.session.labels,
      { done: this.session.progress, total: this.session.sample_size },
      numericMode,
      {
        onLabel: (label) => {
          this.settled = this.submit(label);
        },
        onUndo: () => {
          this.settled = this.undo();
        },
      },
      this.inlineError,
    );
  }
}

function describe(error: unknown): string {
  return error instanceof Error ? error.message : String(error);
}

declare global {
  interface Window {
    reviewApp?: ReviewApp;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const root = document.getElementById("app") as HTMLElement;
  const app = new ReviewApp(root);
  app.attachKeyboard(window);
  app.settled = app.boot();
  window.reviewApp = app;
}
