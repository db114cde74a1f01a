/**
 * Wire protocol: newline-delimited JSON, UTF-8, one object per line.
 *
 * Client opens with a handshake naming the protocol, version, and schedule
 * geometry; the server acks {"ok":true} or {"ok":false,"reason":...}. Every
 * later request carries an integer id the response must echo. Server-side
 * failures travel in an "error" field with the id preserved; a line that is
 * not valid JSON is answered with {"id":null,"error":"parse"} and the loop
 * continues.
 */

export const PROTOCOL_NAME = "layerscale-eval";
export const PROTOCOL_VERSION = 1;

export interface Handshake {
  protocol: string;
  version: number;
  n_layers: number;
  first_scaled_layer?: number;
}

export interface EvalRequest {
  id: number;
  scales: number[];
  first_scaled_layer?: number;
}

export interface Triple {
  accFirst: number;
  accMiddle: number;
  accLast: number;
  sampleCount: number;
}

/** Serialize with a fixed key order so replayed transcripts are byte-stable. */
export function ackLine(ok: boolean, reason?: string): string {
  return ok
    ? JSON.stringify({ ok: true }) + "\n"
    : JSON.stringify({ ok: false, reason: reason ?? "rejected" }) + "\n";
}

export function resultLine(id: number, t: Triple): string {
  return (
    JSON.stringify({
      id,
      acc_first: t.accFirst,
      acc_middle: t.accMiddle,
      acc_last: t.accLast,
      sample_count: t.sampleCount,
    }) + "\n"
  );
}

export function errorLine(id: number | null, message: string): string {
  return JSON.stringify({ id, error: message }) + "\n";
}

export function parseHandshake(obj: unknown): Handshake | null {
  if (typeof obj !== "object" || obj === null) return null;
  const o = obj as Record<string, unknown>;
  if (typeof o.protocol !== "string" || typeof o.version !== "number") return null;
  if (typeof o.n_layers !== "number") return null;
  return {
    protocol: o.protocol,
    version: o.version,
    n_layers: o.n_layers,
    first_scaled_layer:
      typeof o.first_scaled_layer === "number" ? o.first_scaled_layer : 0,
  };
}

export function parseRequest(obj: unknown): EvalRequest | null {
  if (typeof obj !== "object" || obj === null) return null;
  const o = obj as Record<string, unknown>;
  if (typeof o.id !== "number" || !Number.isInteger(o.id)) return null;
  if (!Array.isArray(o.scales) || !o.scales.every((s) => typeof s === "number")) {
    return null;
  }
  return {
    id: o.id,
    scales: o.scales as number[],
    first_scaled_layer:
      typeof o.first_scaled_layer === "number" ? o.first_scaled_layer : 0,
  };
}
