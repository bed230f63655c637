/**
 * Session event streams.
 *
 * The service emits server-sent events with gapless per-session sequence
 * numbers in the `id:` field. SessionStream keeps an ordered, duplicate-free
 * buffer and resumes from the last seen sequence number after a dropped
 * connection, so a reconnected view ends up with exactly the events an
 * uninterrupted one would hold.
 */

export interface StreamEvent {
  seq: number;
  kind: string;
  payload: unknown;
}

export interface SseFrame {
  id: string;
  event: string;
  data: string;
}

export interface SseConnection {
  close(): void;
}

export interface SseHandlers {
  onFrame(frame: SseFrame): void;
  onError(error: unknown): void;
  onEnd(): void;
}

/** Anything that can open an SSE connection from a cursor. */
export interface SseSource {
  connect(lastEventId: number | null, handlers: SseHandlers): SseConnection;
}

/** Incremental parser for an SSE byte stream; tolerates partial chunks. */
export class SseParser {
  private buffer = '';

  push(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    let boundary = this.buffer.indexOf('\n\n');
    while (boundary >= 0) {
      const block = this.buffer.slice(0, boundary);
      this.buffer = this.buffer.slice(boundary + 2);
      const frame: Partial<SseFrame> = {};
      for (const line of block.split('\n')) {
        const colon = line.indexOf(': ');
        if (colon < 0) continue;
        const field = line.slice(0, colon);
        const value = line.slice(colon + 2);
        if (field === 'id') frame.id = value;
        else if (field === 'event') frame.event = value;
        else if (field === 'data') frame.data = (frame.data ?? '') + value;
      }
      if (frame.id !== undefined && frame.event !== undefined && frame.data !== undefined) {
        frames.push(frame as SseFrame);
      }
      boundary = this.buffer.indexOf('\n\n');
    }
    return frames;
  }
}

export type StreamState = 'connecting' | 'live' | 'done' | 'closed';

export class SessionStream {
  readonly events: StreamEvent[] = [];
  state: StreamState = 'closed';
  reconnects = 0;

  private seen = new Set<number>();
  private connection: SseConnection | null = null;
  private listeners = new Set<(event: StreamEvent) => void>();
  private doneListeners = new Set<() => void>();

  constructor(private source: SseSource, private maxReconnects = 20) {}

  onEvent(listener: (event: StreamEvent) => void): void {
    this.listeners.add(listener);
  }

  onDone(listener: () => void): void {
    this.doneListeners.add(listener);
  }

  get lastSeq(): number | null {
    return this.events.length ? this.events[this.events.length - 1].seq : null;
  }

  start(): void {
    this.state = 'connecting';
    this.open();
  }

  close(): void {
    this.connection?.close();
    this.connection = null;
    if (this.state !== 'done') this.state = 'closed';
  }

  private open(): void {
    this.connection = this.source.connect(this.lastSeq, {
      onFrame: (frame) => this.accept(frame),
      onError: () => this.retry(),
      onEnd: () => {
        if (this.state !== 'done') this.retry();
      },
    });
    if (this.state === 'connecting') this.state = 'live';
  }

  private retry(): void {
    if (this.state === 'done' || this.state === 'closed') return;
    this.connection?.close();
    this.connection = null;
    if (this.reconnects >= this.maxReconnects) {
      this.state = 'closed';
      return;
    }
    this.reconnects += 1;
    this.open();
  }

  private accept(frame: SseFrame): void {
    const seq = Number(frame.id);
    if (!Number.isInteger(seq) || this.seen.has(seq)) return;  // no duplicates
    const expected = this.lastSeq === null ? 0 : this.lastSeq + 1;
    if (seq !== expected) {
      // a gap means the connection lost frames: resume from the cursor
      this.retry();
      return;
    }
    this.seen.add(seq);
    const event: StreamEvent = {
      seq,
      kind: frame.event,
      payload: JSON.parse(frame.data),
    };
    this.events.push(event);
    this.listeners.forEach((listener) => listener(event));
    if (frame.event === 'execution-finished') {
      this.state = 'done';
      this.connection?.close();
      this.connection = null;
      this.doneListeners.forEach((listener) => listener());
    }
  }
}

/** Browser source: streams the events endpoint via fetch. */
export class FetchSseSource implements SseSource {
  constructor(private url: string) {}

  connect(lastEventId: number | null, handlers: SseHandlers): SseConnection {
    const controller = new AbortController();
    const headers: Record<string, string> = { Accept: 'text/event-stream' };
    if (lastEventId !== null) headers['Last-Event-ID'] = String(lastEventId);
    const parser = new SseParser();
    fetch(this.url, { headers, signal: controller.signal })
      .then(async (response) => {
        if (!response.ok || !response.body) {
          handlers.onError(new Error(`stream failed: ${response.status}`));
          return;
        }
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          parser.push(decoder.decode(value, { stream: true })).forEach(handlers.onFrame);
        }
        handlers.onEnd();
      })
      .catch((error) => {
        if (!controller.signal.aborted) handlers.onError(error);
      });
    return { close: () => controller.abort() };
  }
}
