import { spawn, type ChildProcess } from "node:child_process";
import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import path from "node:path";

import { Client } from "../src/api.js";

const repoRoot = path.resolve(path.dirname(fileURLToPath(import.meta.url)), "..", "..");

export const samplePath = (name: string): string => path.join(repoRoot, "sample", name);

export function readSample(name: string): string {
  return readFileSync(samplePath(name), "utf-8");
}

export interface LiveServer {
  baseUrl: string;
  client: Client;
  stop: () => void;
}

/** Boot the real API server and wait until it answers. */
export async function startServer(portOffset = 0): Promise<LiveServer> {
  const port = 8800 + (process.pid % 150) + portOffset;
  const baseUrl = `http://127.0.0.1:${port}`;
  const child: ChildProcess = spawn(
    "rulecube",
    ["serve", "--listen", `127.0.0.1:${port}`],
    { cwd: repoRoot, stdio: ["ignore", "pipe", "pipe"] },
  );
  let stderr = "";
  child.stderr?.on("data", (chunk) => (stderr += String(chunk)));

  const client = new Client(baseUrl);
  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      await client.listModels();
      break;
    } catch {
      if (child.exitCode !== null) {
        throw new Error(`server exited early (${child.exitCode}): ${stderr}`);
      }
      if (Date.now() > deadline) {
        child.kill();
        throw new Error(`server did not come up: ${stderr}`);
      }
      await new Promise((resolve) => setTimeout(resolve, 200));
    }
  }
  return { baseUrl, client, stop: () => child.kill() };
}

/** Deterministic Actuals rows for Europe so variance scenarios are nonzero. */
export function syntheticActualsCsv(): string {
  const lines = ["ACCTS,SCENARIO,TIME,ORG,PRODUCT,Value"];
  const quarters = ["Qtr1", "Qtr2", "Qtr3", "Qtr4"];
  const products = ["Commercial", "Energy Savings", "LED Based", "Outdoor"];
  const accounts: [string, number][] = [
    ["Total sales", 9500],
    ["Discounts and allowances", 4],
    ["Standard cost of sales", 7000],
    ["Manufacturing Variances", 90],
    ["Other Adjustments", 45],
  ];
  let bump = 0;
  for (const q of quarters) {
    for (const p of products) {
      for (const [account, base] of accounts) {
        bump += 1;
        const value = base + ((bump * 37) % 211) + 0.25;
        lines.push(`${account},Actuals,${q},Europe,${p},${value}`);
      }
    }
  }
  return lines.join("\n") + "\n";
}

export function rowIndex(headers: string[][], name: string): number {
  const index = headers.findIndex((h) => h[0] === name);
  if (index < 0) throw new Error(`no header ${name}`);
  return index;
}
