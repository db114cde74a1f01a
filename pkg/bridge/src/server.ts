/**
 * Transport-agnostic session logic: feed it input lines, collect response
 * lines. One session per connection; requests are answered strictly in
 * arrival order.
 */

import {
  EvalRequest,
  PROTOCOL_NAME,
  PROTOCOL_VERSION,
  Triple,
  ackLine,
  errorLine,
  parseHandshake,
  parseRequest,
  resultLine,
} from "./protocol.js";

/**
 * A scorer maps (scales, firstScaledLayer) to a triple. The stub ignores its
 * input entirely, which gives search clients a constant fitness landscape to
 * test caching and retry logic against. A plugin scorer is where a real
 * harness plugs in: prompt a model with retrieval tasks whose target sits at
 * the first/middle/last context position and report the three accuracies.
 */
export type Scorer = (
  scales: number[],
  firstScaledLayer: number,
) => Triple | Promise<Triple>;

export function stubScorer(triple: Triple): Scorer {
  return () => triple;
}

export interface BridgeConfig {
  nLayers: number;
  scorer: Scorer;
}

export class BridgeSession {
  private handshaken = false;
  private rejected = false;

  constructor(private readonly config: BridgeConfig) {}

  /** True once the session refused the handshake; the transport should close. */
  get closed(): boolean {
    return this.rejected;
  }

  async handleLine(raw: string): Promise<string> {
    const line = raw.trim();
    if (line.length === 0) {
      return errorLine(null, "empty line");
    }
    let obj: unknown;
    try {
      obj = JSON.parse(line);
    } catch {
      return errorLine(null, "parse");
    }

    if (!this.handshaken) {
      const hs = parseHandshake(obj);
      if (hs === null) {
        this.rejected = true;
        return ackLine(false, "malformed handshake");
      }
      if (hs.protocol !== PROTOCOL_NAME) {
        this.rejected = true;
        return ackLine(false, `unknown protocol ${hs.protocol}`);
      }
      if (hs.version !== PROTOCOL_VERSION) {
        this.rejected = true;
        return ackLine(false, `unsupported version ${hs.version}`);
      }
      if (hs.n_layers !== this.config.nLayers) {
        this.rejected = true;
        return ackLine(
          false,
          `n_layers mismatch: client ${hs.n_layers}, server ${this.config.nLayers}`,
        );
      }
      this.handshaken = true;
      return ackLine(true);
    }

    const req = parseRequest(obj);
    if (req === null) {
      const maybeId = (obj as Record<string, unknown>)?.id;
      const id = typeof maybeId === "number" && Number.isInteger(maybeId) ? maybeId : null;
      return errorLine(id, "bad request");
    }
    if (req.scales.length !== this.config.nLayers) {
      return errorLine(
        req.id,
        `scales length ${req.scales.length} != n_layers ${this.config.nLayers}`,
      );
    }
    return this.score(req);
  }

  private async score(req: EvalRequest): Promise<string> {
    try {
      const triple = await this.config.scorer(req.scales, req.first_scaled_layer ?? 0);
      return resultLine(req.id, triple);
    } catch (err) {
      // plugin failures answer the request and keep the connection alive
      return errorLine(req.id, err instanceof Error ? err.message : String(err));
    }
  }
}

/** Split a byte stream into lines, calling the session per line in order. */
export class LineFeeder {
  private buffer = "";

  constructor(
    private readonly session: BridgeSession,
    private readonly write: (chunk: string) => void,
    private readonly onClose?: () => void,
  ) {}

  private queue: Promise<void> = Promise.resolve();

  feed(chunk: string): void {
    this.buffer += chunk;
    for (;;) {
      const nl = this.buffer.indexOf("\n");
      if (nl < 0) break;
      const line = this.buffer.slice(0, nl);
      this.buffer = this.buffer.slice(nl + 1);
      // chain onto the queue so responses keep arrival order even when the
      // scorer is async
      this.queue = this.queue.then(async () => {
        const reply = await this.session.handleLine(line);
        this.write(reply);
        if (this.session.closed) this.onClose?.();
      });
    }
  }

  /** Resolves when every line fed so far has been answered. */
  drain(): Promise<void> {
    return this.queue;
  }
}
