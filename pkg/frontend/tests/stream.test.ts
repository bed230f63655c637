import { describe, expect, it } from 'vitest';

import {
  SseFrame, SseHandlers, SseParser, SseSource, SessionStream,
} from '../src/stream.js';

/** Server-side event log: 500 episode results followed by one terminal. */
function sessionLog(episodes: number): SseFrame[] {
  const frames: SseFrame[] = [];
  for (let i = 0; i < episodes; i += 1) {
    frames.push({
      id: String(i),
      event: 'episode-result',
      data: JSON.stringify({ episode: i, outcome: i % 3 !== 0,
                             running_mean: (i + 1) / episodes }),
    });
  }
  frames.push({
    id: String(episodes),
    event: 'execution-finished',
    data: JSON.stringify({ episodes }),
  });
  return frames;
}

/**
 * Scripted source replaying a fixed log. Connections drop (onError) at the
 * scripted positions; reconnects resume after the Last-Event-ID cursor, like
 * the real endpoint does.
 */
class ScriptedSource implements SseSource {
  connections = 0;

  constructor(private log: SseFrame[], private dropAfter: number[] = []) {}

  connect(lastEventId: number | null, handlers: SseHandlers) {
    const connection = this.connections;
    this.connections += 1;
    let closed = false;
    const start = lastEventId === null ? 0 : lastEventId + 1;
    const dropAt = this.dropAfter[connection];
    queueMicrotask(() => {
      for (const frame of this.log.slice(start)) {
        if (closed) return;
        handlers.onFrame(frame);
        if (dropAt !== undefined && Number(frame.id) >= dropAt) {
          handlers.onError(new Error('connection dropped'));
          return;
        }
      }
      handlers.onEnd();
    });
    return { close: () => { closed = true; } };
  }
}

function finished(stream: SessionStream): Promise<void> {
  return new Promise((resolve) => stream.onDone(resolve));
}

describe('session event stream', () => {
  it('delivers a 500-episode session gaplessly across a forced reconnect', async () => {
    const source = new ScriptedSource(sessionLog(500), [251]);  // drop mid-run
    const stream = new SessionStream(source);
    stream.start();
    await finished(stream);

    expect(source.connections).toBe(2);  // the drop forced one reconnect
    const episodeEvents = stream.events.filter((e) => e.kind === 'episode-result');
    expect(episodeEvents).toHaveLength(500);
    expect(stream.events.map((e) => e.seq))
      .toEqual(Array.from({ length: 501 }, (_, i) => i));
    expect(stream.events[stream.events.length - 1].kind).toBe('execution-finished');
    expect(stream.state).toBe('done');
  });

  it('matches an uninterrupted run event for event', async () => {
    const log = sessionLog(120);
    const smooth = new SessionStream(new ScriptedSource(log));
    smooth.start();
    await finished(smooth);

    const bumpy = new SessionStream(new ScriptedSource(log, [40, 80, 81]));
    bumpy.start();
    await finished(bumpy);

    expect(bumpy.events).toEqual(smooth.events);
    expect(bumpy.reconnects).toBeGreaterThan(0);
  });

  it('drops duplicate frames instead of double-counting', async () => {
    const log = sessionLog(5);
    const replaying: SseFrame[] = [log[0], log[0], log[1], log[1], ...log.slice(2)];
    const stream = new SessionStream(new ScriptedSource(replaying));
    stream.start();
    await finished(stream);
    expect(stream.events.map((e) => e.seq)).toEqual([0, 1, 2, 3, 4, 5]);
  });

  it('treats a sequence gap as a lost connection and resumes', async () => {
    const log = sessionLog(10);
    const gappy = [...log.slice(0, 3), ...log.slice(5)];  // frames 3-4 lost
    class GapThenClean extends ScriptedSource {
      private first = true;

      connect(lastEventId: number | null, handlers: SseHandlers) {
        if (this.first) {
          this.first = false;
          let closed = false;
          queueMicrotask(() => {
            for (const frame of gappy) {
              if (closed) return;
              handlers.onFrame(frame);
            }
            handlers.onEnd();
          });
          return { close: () => { closed = true; } };
        }
        return super.connect(lastEventId, handlers);
      }
    }
    const stream = new SessionStream(new GapThenClean(log));
    stream.start();
    await finished(stream);
    expect(stream.events.map((e) => e.seq)).toEqual(Array.from({ length: 11 }, (_, i) => i));
  });
});

describe('sse parser', () => {
  it('reassembles frames across chunk boundaries', () => {
    const parser = new SseParser();
    const frames = [
      ...parser.push('id: 0\nevent: episode-result\nda'),
      ...parser.push('ta: {"episode": 0}\n\nid: 1\nevent: exec'),
      ...parser.push('ution-finished\ndata: {}\n\n'),
    ];
    expect(frames).toEqual([
      { id: '0', event: 'episode-result', data: '{"episode": 0}' },
      { id: '1', event: 'execution-finished', data: '{}' },
    ]);
  });
});
