/**
 * Playing dashboard: live success curve from episode events plus the
 * five-band clip-network view with edge opacities from service-provided
 * probabilities. Reconnecting mid-session resumes from the event cursor.
 */

import { Api, EcmDocument } from '../api.js';
import { CurvePoint, curvePath, layeredLayout } from '../charts.js';
import { SessionStream } from '../stream.js';

const SVG_NS = 'http://www.w3.org/2000/svg';

interface EpisodePayload {
  episode: number;
  outcome: boolean;
  running_mean: number;
}

export class PlayingView {
  private stream: SessionStream | null = null;
  private points: CurvePoint[] = [];
  private episodes = 100;
  private status = document.createElement('div');
  private curve = document.createElementNS(SVG_NS, 'svg');
  private network = document.createElementNS(SVG_NS, 'svg');
  private skillSelect = document.createElement('select');

  constructor(private root: HTMLElement, private api: Api) {}

  async mount(): Promise<void> {
    const panel = document.createElement('div');
    panel.className = 'panel';
    const controls = document.createElement('div');
    controls.className = 'toolbar';
    for (const skill of await this.api.skills()) {
      const option = document.createElement('option');
      option.value = skill.id;
      option.textContent = skill.id + (skill.trained ? ' (trained)' : '');
      this.skillSelect.append(option);
    }
    this.skillSelect.value = 'book_grasping';
    const episodesInput = document.createElement('input');
    episodesInput.value = '500';
    episodesInput.size = 5;
    const seedInput = document.createElement('input');
    seedInput.value = '42';
    seedInput.size = 5;
    const start = document.createElement('button');
    start.className = 'action';
    start.textContent = 'Start playing';
    start.addEventListener('click', () => {
      this.episodes = Number(episodesInput.value) || 100;
      void this.startSession(this.skillSelect.value, this.episodes,
                             Number(seedInput.value) || 0);
    });
    controls.append(this.skillSelect, document.createTextNode(' episodes '),
                    episodesInput, document.createTextNode(' seed '), seedInput, start);

    this.curve.setAttribute('viewBox', '0 0 400 160');
    this.curve.setAttribute('class', 'curve');
    this.network.setAttribute('viewBox', '0 0 420 300');
    this.network.setAttribute('class', 'network');
    this.status.className = 'feedback';
    panel.append(controls, this.status, this.curve,
                 Object.assign(document.createElement('h3'),
                               { textContent: 'Clip network' }),
                 this.network);
    this.root.replaceChildren(panel);
  }

  private async startSession(skill: string, episodes: number, seed: number):
      Promise<void> {
    this.stream?.close();
    this.points = [];
    const ref = await this.api.play(skill, episodes, seed);
    this.status.textContent = `session ${ref.session} (seed ${ref.seed}) running`;
    this.stream = this.api.stream(ref.session);
    this.stream.onEvent((event) => {
      if (event.kind !== 'episode-result') return;
      const payload = event.payload as EpisodePayload;
      this.points.push({ episode: payload.episode, runningMean: payload.running_mean });
      if (payload.episode % 5 === 0 || payload.episode === episodes - 1) {
        this.renderCurve();
      }
    });
    this.stream.onDone(() => {
      this.renderCurve();
      const mean = this.points.length
        ? this.points[this.points.length - 1].runningMean : 0;
      this.status.textContent =
        `finished ${this.points.length} episodes; final running mean ${mean.toFixed(3)}`;
      void this.renderNetwork(skill);
    });
    this.stream.start();
  }

  private renderCurve(): void {
    this.curve.replaceChildren();
    const path = document.createElementNS(SVG_NS, 'path');
    path.setAttribute('d', curvePath(this.points, 400, 160, this.episodes));
    path.setAttribute('class', 'curve-line');
    this.curve.append(path);
  }

  private async renderNetwork(skill: string): Promise<void> {
    let ecm: EcmDocument;
    try {
      ecm = await this.api.ecm(skill);
    } catch {
      return;  // skill may be untrained if the session failed early
    }
    const layout = layeredLayout(ecm, 420, 300);
    this.network.replaceChildren();
    for (const edge of layout.edges) {
      const line = document.createElementNS(SVG_NS, 'line');
      line.setAttribute('x1', String(edge.from.x));
      line.setAttribute('y1', String(edge.from.y));
      line.setAttribute('x2', String(edge.to.x));
      line.setAttribute('y2', String(edge.to.y));
      line.setAttribute('class', 'edge');
      line.setAttribute('stroke-opacity', String(Math.max(edge.p, 0.04)));
      line.setAttribute('stroke-width', String(0.5 + 3 * edge.p));
      this.network.append(line);
    }
    for (const node of layout.nodes) {
      const dot = document.createElementNS(SVG_NS, 'circle');
      dot.setAttribute('cx', String(node.x));
      dot.setAttribute('cy', String(node.y));
      dot.setAttribute('r', '5');
      dot.setAttribute('class', `clip layer-${node.layer}`);
      const tag = document.createElementNS(SVG_NS, 'text');
      tag.setAttribute('x', String(node.x));
      tag.setAttribute('y', String(node.y - 8));
      tag.setAttribute('class', 'object-label');
      tag.textContent = node.label;
      this.network.append(dot, tag);
    }
  }
}
