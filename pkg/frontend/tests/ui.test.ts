/** Scripted browser test against a live review service: a 10-item session
 * labeled entirely via keyboard shortcuts, one undo (tombstone), and a
 * rendered report that mirrors /api/report exactly. */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, expect, test } from "vitest";

import type { QualityReport } from "../src/api.js";
import { ReviewApp } from "../src/main.js";
import { formatShare } from "../src/view.js";

let workdir: string;
let server: ChildProcess;
let baseUrl: string;
let evalPath: string;

function annotationsFixture(): string {
  const characters: Record<string, object[]> = {};
  const names = ["Homer Simpson", "Marge Simpson", "Lisa Simpson"];
  for (let i = 0; i < 12; i++) {
    const name = names[i % names.length];
    (characters[name] ??= []).push({
      Action: `Does something notable, number ${i}.`,
      [`trait${i % 4}`]: 1,
      Chunk: (i % 3) + 1,
    });
  }
  return JSON.stringify(characters, null, 2);
}

function chunksFixture(): string {
  return JSON.stringify(
    { "1": "Scene one text.", "2": "Scene two text.", "3": "Scene three text." },
    null,
    2,
  );
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "review-ui-"));
  writeFileSync(join(workdir, "annotations.json"), annotationsFixture());
  writeFileSync(join(workdir, "chunks.json"), chunksFixture());
  evalPath = join(workdir, "eval.jsonl");

  server = spawn(
    "python3",
    [
      "-m", "charannot.cli", "review",
      "--annotations", join(workdir, "annotations.json"),
      "--chunks", join(workdir, "chunks.json"),
      "--eval", evalPath,
      "--n", "10",
      "--seed", "5",
      "--port", "0",
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );

  baseUrl = await new Promise<string>((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(
      () => reject(new Error(`review service did not start: ${buffer}`)),
      20_000,
    );
    server.stderr!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(/http:\/\/127\.0\.0\.1:(\d+)\//);
      if (match) {
        clearTimeout(timer);
        resolve(`http://127.0.0.1:${match[1]}`);
      }
    });
    server.on("exit", (code) =>
      reject(new Error(`review service exited early (${code}): ${buffer}`)),
    );
  });
});

afterAll(() => {
  server?.kill();
  rmSync(workdir, { recursive: true, force: true });
});

function press(key: string): void {
  window.dispatchEvent(new window.KeyboardEvent("keydown", { key }));
}

test("keyboard labeling, undo tombstone, and report fidelity", async () => {
  document.body.innerHTML = '<div id="app"></div>';
  const root = document.getElementById("app") as HTMLElement;
  const app = new ReviewApp(root, baseUrl);
  app.attachKeyboard(window);
  await (app.settled = app.boot());

  expect(app.currentPhase).toBe("reviewing");
  expect(root.querySelectorAll(".label-button")).toHaveLength(3);
  expect(root.querySelector(".progress-label")!.textContent).toBe("0/10");

  // three labels via keys 1/2/3, then one undo via key u
  for (const key of ["1", "2", "3"]) {
    press(key);
    await app.settled;
  }
  expect(root.querySelector(".progress-label")!.textContent).toBe("3/10");
  press("u");
  await app.settled;
  expect(root.querySelector(".progress-label")!.textContent).toBe("2/10");

  // finish the remaining eight items with keyboard shortcuts
  const keys = ["1", "2", "3", "1", "1", "2", "1", "3"];
  for (const key of keys) {
    press(key);
    await app.settled;
  }
  expect(app.currentPhase).toBe("finished");

  // eval store: 10 surviving records in sampled order, one tombstone line
  const lines = readFileSync(evalPath, "utf-8").trim().split("\n").map((l) => JSON.parse(l));
  expect(lines).toHaveLength(12); // 11 labels + 1 tombstone
  const tombstones = lines.filter((l) => l.undo === true);
  expect(tombstones).toHaveLength(1);
  const stack: any[] = [];
  for (const line of lines) {
    if (line.undo === true) stack.pop();
    else stack.push(line);
  }
  expect(stack).toHaveLength(10);
  expect(stack.map((r) => r.sampled_index)).toEqual([...Array(10).keys()]);

  // rendered report mirrors GET /api/report exactly
  const report = (await (await fetch(`${baseUrl}/api/report`)).json()) as QualityReport;
  const rows = [...root.querySelectorAll<HTMLTableRowElement>("tr[data-label]")];
  expect(rows.map((r) => r.dataset.label)).toEqual(report.labels.map((l) => l.label));
  for (const [i, row] of rows.entries()) {
    const stats = report.labels[i];
    expect(row.querySelector(".share")!.textContent).toBe(
      formatShare(stats.proportion, stats.ci_low, stats.ci_high),
    );
  }
  expect(root.querySelector(".report-n")!.textContent).toBe(
    `${report.n} annotations reviewed`,
  );
});

test("refresh mid-session resumes at server progress", async () => {
  // the previous test completed the session; a fresh eval file simulates a
  // partially-labeled store for a brand-new browser session
  const evalPath2 = join(workdir, "eval2.jsonl");
  const record = {
    character: "Homer Simpson",
    chunk: 1,
    action: "Does something notable, number 0.",
    trait: "trait0",
    llm_rating: 1,
    label: "Correct",
    sampled_index: 0,
    timestamp: "2024-01-01T00:00:00+00:00",
  };
  writeFileSync(evalPath2, JSON.stringify(record) + "\n");

  const server2 = spawn(
    "python3",
    [
      "-m", "charannot.cli", "review",
      "--annotations", join(workdir, "annotations.json"),
      "--chunks", join(workdir, "chunks.json"),
      "--eval", evalPath2,
      "--n", "10",
      "--seed", "5",
      "--port", "0",
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  try {
    const base2 = await new Promise<string>((resolve, reject) => {
      let buffer = "";
      const timer = setTimeout(() => reject(new Error("no start")), 20_000);
      server2.stderr!.on("data", (chunk: Buffer) => {
        buffer += chunk.toString();
        const match = buffer.match(/http:\/\/127\.0\.0\.1:(\d+)\//);
        if (match) {
          clearTimeout(timer);
          resolve(`http://127.0.0.1:${match[1]}`);
        }
      });
    });
    document.body.innerHTML = '<div id="app"></div>';
    const root = document.getElementById("app") as HTMLElement;
    const app = new ReviewApp(root, base2);
    await (app.settled = app.boot());
    expect(root.querySelector(".progress-label")!.textContent).toBe("1/10");
  } finally {
    server2.kill();
  }
});
