/**
 * Subprocess plumbing for the mitoseg CLI.
 *
 * The command defaults to `mitoseg` on PATH; set MITOSEG_CLI to override
 * (whitespace-separated, e.g. "python3 -m mitoseg").  Calls are async, so
 * long computations never block the event loop.  CLI validation errors
 * (exit code 2, `error: ...` on stderr) surface as plain Errors carrying
 * the same message text.
 */

import { execFile } from "node:child_process";
import * as fs from "node:fs/promises";
import * as os from "node:os";
import * as path from "node:path";
import { promisify } from "node:util";

const execFileAsync = promisify(execFile);

export function cliCommand(): string[] {
  const override = process.env.MITOSEG_CLI;
  const parts = override ? override.split(/\s+/).filter(Boolean) : ["mitoseg"];
  if (parts.length === 0) {
    throw new Error("MITOSEG_CLI is set but empty");
  }
  return parts;
}

export async function runCli(args: string[]): Promise<{ stdout: string; stderr: string }> {
  const [cmd, ...prefix] = cliCommand();
  try {
    return await execFileAsync(cmd, [...prefix, ...args], {
      maxBuffer: 64 * 1024 * 1024,
    });
  } catch (err) {
    const e = err as { stderr?: string; message?: string };
    const stderr = e.stderr ?? "";
    const match = /^error: (.*)$/m.exec(stderr);
    if (match) {
      throw new Error(match[1]);
    }
    const internal = /^internal error: (.*)$/m.exec(stderr);
    if (internal) {
      throw new Error(internal[1]);
    }
    throw new Error(`mitoseg CLI failed: ${e.message ?? String(err)}`);
  }
}

export async function withTempDir<T>(fn: (dir: string) => Promise<T>): Promise<T> {
  const dir = await fs.mkdtemp(path.join(os.tmpdir(), "mitoseg-"));
  try {
    return await fn(dir);
  } finally {
    await fs.rm(dir, { recursive: true, force: true });
  }
}
