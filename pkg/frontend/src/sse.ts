/** Minimal resumable server-sent-events client on fetch streams.
 *
 * Reconnects with exponential backoff, replaying from the last seen event id
 * via the Last-Event-ID header, and distinguishes "engine unreachable" (the
 * connection attempt failed) from "stream dropped" (an open stream ended).
 */

export type ConnectionState = "idle" | "connecting" | "live" | "dropped" | "unreachable";

export interface SseEvent {
  id: number | null;
  data: string;
}

/** Incremental parser for the text/event-stream framing. */
export class SseParser {
  private buffer = "";
  private id: number | null = null;
  private data: string[] = [];

  feed(chunk: string): SseEvent[] {
    this.buffer += chunk;
    const events: SseEvent[] = [];
    let nl: number;
    while ((nl = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, nl).replace(/\r$/, "");
      this.buffer = this.buffer.slice(nl + 1);
      if (line === "") {
        if (this.data.length > 0) {
          events.push({ id: this.id, data: this.data.join("\n") });
        }
        this.id = null;
        this.data = [];
      } else if (line.startsWith(":")) {
        // comment / keepalive
      } else if (line.startsWith("id:")) {
        const v = Number(line.slice(3).trim());
        this.id = Number.isFinite(v) ? v : null;
      } else if (line.startsWith("data:")) {
        this.data.push(line.slice(5).trim());
      }
    }
    return events;
  }
}

export interface StreamHandlers {
  onEvent: (event: SseEvent) => void;
  onState: (state: ConnectionState) => void;
}

export interface StreamOptions {
  fetchImpl?: typeof fetch;
  initialBackoffMs?: number;
  maxBackoffMs?: number;
}

export class EventStream {
  lastEventId: number | null = null;
  reconnects = 0;
  private stopped = false;
  private controller: AbortController | null = null;
  private readonly fetchImpl: typeof fetch;
  private readonly initialBackoffMs: number;
  private readonly maxBackoffMs: number;

  constructor(
    private readonly url: string,
    private readonly handlers: StreamHandlers,
    options: StreamOptions = {},
  ) {
    this.fetchImpl = options.fetchImpl ?? fetch;
    this.initialBackoffMs = options.initialBackoffMs ?? 500;
    this.maxBackoffMs = options.maxBackoffMs ?? 5000;
  }

  async start(): Promise<void> {
    this.stopped = false;
    let backoff = this.initialBackoffMs;
    while (!this.stopped) {
      this.handlers.onState(this.lastEventId === null ? "connecting" : "dropped");
      this.controller = new AbortController();
      let response: Response;
      try {
        const headers: Record<string, string> = {};
        if (this.lastEventId !== null) {
          headers["Last-Event-ID"] = String(this.lastEventId);
        }
        response = await this.fetchImpl(this.url, {
          headers,
          signal: this.controller.signal,
        });
        if (!response.ok || !response.body) throw new Error(`HTTP ${response.status}`);
      } catch (err) {
        if (this.stopped) return;
        this.handlers.onState("unreachable");
        await sleep(backoff);
        backoff = Math.min(backoff * 2, this.maxBackoffMs);
        continue;
      }
      backoff = this.initialBackoffMs;
      this.handlers.onState("live");
      const parser = new SseParser();
      const reader = response.body.getReader();
      const decoder = new TextDecoder();
      try {
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          for (const event of parser.feed(decoder.decode(value, { stream: true }))) {
            if (event.id !== null) this.lastEventId = event.id;
            this.handlers.onEvent(event);
          }
        }
      } catch {
        // fall through to reconnect
      }
      if (this.stopped) return;
      this.reconnects += 1;
      this.handlers.onState("dropped");
      await sleep(backoff);
      backoff = Math.min(backoff * 2, this.maxBackoffMs);
    }
  }

  /** Abort the open stream (test hook for forced drops). */
  dropConnection(): void {
    this.controller?.abort();
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
    this.handlers.onState("idle");
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
