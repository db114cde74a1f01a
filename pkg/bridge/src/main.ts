#!/usr/bin/env node
/**
 * Evaluation bridge CLI.
 *
 *   layerscale-bridge --stdio --stub 70,55.6,60.2 --n-layers 30
 *   layerscale-bridge --port 7777 --stub 70,55.6,60.2,200 --n-layers 30
 *   layerscale-bridge --stdio --plugin ./my_scorer.mjs --n-layers 30
 *
 * A plugin module default-exports a function
 *   (scales: number[], firstScaledLayer: number) =>
 *       [accFirst, accMiddle, accLast, sampleCount]
 * (sync or async). Everything about datasets, prompt templates, and model
 * calls stays inside the plugin.
 */

import net from "node:net";
import process from "node:process";
import { pathToFileURL } from "node:url";

import { Triple } from "./protocol.js";
import { BridgeConfig, BridgeSession, LineFeeder, Scorer, stubScorer } from "./server.js";

interface CliOptions {
  stdio: boolean;
  port: number | null;
  stub: Triple | null;
  plugin: string | null;
  nLayers: number;
}

function usage(message?: string): never {
  if (message) process.stderr.write(`error: ${message}\n`);
  process.stderr.write(
    "usage: layerscale-bridge (--stdio | --port N) --n-layers N " +
      "(--stub a,b,c[,n] | --plugin module.mjs)\n",
  );
  process.exit(2);
}

export function parseArgs(argv: string[]): CliOptions {
  const opts: CliOptions = { stdio: false, port: null, stub: null, plugin: null, nLayers: -1 };
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const next = () => {
      const v = argv[++i];
      if (v === undefined) usage(`${arg} needs a value`);
      return v;
    };
    switch (arg) {
      case "--stdio":
        opts.stdio = true;
        break;
      case "--port":
        opts.port = Number(next());
        break;
      case "--stub": {
        const parts = next().split(",").map(Number);
        if (parts.length < 3 || parts.length > 4 || parts.some(Number.isNaN)) {
          usage("--stub needs acc_first,acc_middle,acc_last[,sample_count]");
        }
        opts.stub = {
          accFirst: parts[0],
          accMiddle: parts[1],
          accLast: parts[2],
          sampleCount: parts[3] ?? 200,
        };
        break;
      }
      case "--plugin":
        opts.plugin = next();
        break;
      case "--n-layers":
        opts.nLayers = Number(next());
        break;
      default:
        usage(`unknown argument ${arg}`);
    }
  }
  if (opts.stdio === (opts.port !== null)) usage("pick exactly one of --stdio / --port");
  if (!Number.isInteger(opts.nLayers) || opts.nLayers < 1) usage("--n-layers is required");
  if ((opts.stub !== null) === (opts.plugin !== null)) {
    usage("pick exactly one of --stub / --plugin");
  }
  return opts;
}

async function makeScorer(opts: CliOptions): Promise<Scorer> {
  if (opts.stub) return stubScorer(opts.stub);
  const url = pathToFileURL(opts.plugin!).href;
  const mod = await import(url);
  const fn = mod.default;
  if (typeof fn !== "function") {
    throw new Error(`plugin ${opts.plugin} has no default function export`);
  }
  return async (scales, first) => {
    const out = await fn(scales, first);
    if (!Array.isArray(out) || out.length < 3) {
      throw new Error("plugin must return [accFirst, accMiddle, accLast, sampleCount?]");
    }
    return {
      accFirst: out[0],
      accMiddle: out[1],
      accLast: out[2],
      sampleCount: out[3] ?? 0,
    };
  };
}

function serveStdio(config: BridgeConfig): void {
  const session = new BridgeSession(config);
  const feeder = new LineFeeder(
    session,
    (chunk) => process.stdout.write(chunk),
    () => process.exit(0),
  );
  process.stdin.setEncoding("utf-8");
  process.stdin.on("data", (chunk: string) => feeder.feed(chunk));
  process.stdin.on("end", async () => {
    await feeder.drain();
    process.exit(0);
  });
}

function serveTcp(config: BridgeConfig, port: number): void {
  // one connection at a time, sequential requests
  const server = net.createServer((socket) => {
    const session = new BridgeSession(config);
    const feeder = new LineFeeder(
      session,
      (chunk) => socket.write(chunk),
      () => socket.end(),
    );
    socket.setEncoding("utf-8");
    socket.on("data", (chunk: string) => feeder.feed(chunk));
    socket.on("error", () => socket.destroy());
  });
  server.maxConnections = 1;
  server.listen(port, () => {
    process.stderr.write(`layerscale-bridge listening on :${port}\n`);
  });
}

async function main(): Promise<void> {
  const opts = parseArgs(process.argv.slice(2));
  const config: BridgeConfig = { nLayers: opts.nLayers, scorer: await makeScorer(opts) };
  if (opts.stdio) {
    serveStdio(config);
  } else {
    serveTcp(config, opts.port!);
  }
}

const isDirectRun =
  process.argv[1] !== undefined &&
  import.meta.url === pathToFileURL(process.argv[1]).href;
if (isDirectRun) {
  main().catch((err) => {
    process.stderr.write(`fatal: ${err?.message ?? err}\n`);
    process.exit(1);
  });
}
