/**
 * Blame explorer: start a diagnosis session (optionally with an injected
 * fault for demos), watch the posterior concentrate test by test, and export
 * the final report. Posteriors are rendered exactly as received.
 */

import { Api } from '../api.js';
import { blameBars } from '../charts.js';
import { SessionStream } from '../stream.js';

interface BlameSnapshot {
  step: number;
  skill: string;
  outcome: boolean;
  t_fail: number | null;
  blame: [string, number][];
}

export class BlameView {
  private stream: SessionStream | null = null;
  private status = document.createElement('div');
  private bars = document.createElement('div');
  private log = document.createElement('ol');
  private session: string | null = null;

  constructor(private root: HTMLElement, private api: Api) {}

  async mount(): Promise<void> {
    const panel = document.createElement('div');
    panel.className = 'panel';
    const controls = document.createElement('div');
    controls.className = 'toolbar';

    const inject = document.createElement('input');
    inject.placeholder = 'function to break (optional)';
    inject.size = 24;
    const budget = document.createElement('input');
    budget.value = '15';
    budget.size = 4;
    const start = document.createElement('button');
    start.className = 'action';
    start.textContent = 'Start diagnosis';
    start.addEventListener('click', () => {
      void this.startSession(inject.value.trim() || null, Number(budget.value) || 15);
    });
    const stop = document.createElement('button');
    stop.className = 'action';
    stop.textContent = 'Stop and export';
    stop.addEventListener('click', () => void this.export());
    controls.append(document.createTextNode('budget '), budget, inject, start, stop);

    this.status.className = 'feedback';
    this.bars.className = 'blame-bars';
    this.log.className = 'session-log';
    panel.append(controls, this.status, this.bars,
                 Object.assign(document.createElement('h3'),
                               { textContent: 'Executed tests' }),
                 this.log);
    this.root.replaceChildren(panel);
  }

  private async startSession(inject: string | null, budget: number): Promise<void> {
    this.stream?.close();
    this.log.replaceChildren();
    this.bars.replaceChildren();
    const body: { budget: number; inject?: Record<string, unknown> } = { budget };
    if (inject) body.inject = { function_id: inject, mode: 'fail_hard' };
    const ref = await this.api.diagnose(body);
    this.session = ref.session;
    this.status.textContent = `diagnosis ${ref.session} running`;
    this.stream = this.api.stream(ref.session);
    this.stream.onEvent((event) => {
      if (event.kind !== 'blame-snapshot') return;
      const snapshot = event.payload as BlameSnapshot;
      this.renderBars(snapshot.blame);
      const item = document.createElement('li');
      item.textContent = `${snapshot.skill}: ${snapshot.outcome ? 'success' : 'failure'}`
        + (snapshot.t_fail !== null ? ` (t_fail ${snapshot.t_fail})` : '');
      this.log.append(item);
    });
    this.stream.onDone(() => {
      const last = this.stream!.events[this.stream!.events.length - 1];
      const payload = last.payload as { argmax?: string; tests_executed?: number };
      this.status.textContent = payload.argmax
        ? `suspect: ${payload.argmax} after ${payload.tests_executed} tests`
        : 'diagnosis finished';
    });
    this.stream.start();
  }

  private renderBars(top: [string, number][]): void {
    this.bars.replaceChildren();
    for (const bar of blameBars(top)) {
      const row = document.createElement('div');
      row.className = 'blame-row';
      const label = document.createElement('span');
      label.className = 'blame-label';
      label.textContent = bar.hypothesis;
      const track = document.createElement('div');
      track.className = 'blame-track';
      const fill = document.createElement('div');
      fill.className = bar.hypothesis === 'no-fault' ? 'blame-fill nofault' : 'blame-fill';
      fill.style.width = `${(bar.width * 100).toFixed(1)}%`;
      fill.textContent = bar.posterior.toFixed(3);
      track.append(fill);
      row.append(label, track);
      this.bars.append(row);
    }
  }

  private async export(): Promise<void> {
    if (!this.session) return;
    const report = await this.api.blame(this.session);
    const blob = new Blob([JSON.stringify(report, null, 2)],
                          { type: 'application/json' });
    const link = document.createElement('a');
    link.href = URL.createObjectURL(blob);
    link.download = `blame-${this.session}.json`;
    link.click();
    URL.revokeObjectURL(link.href);
  }
}
