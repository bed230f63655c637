/**
 * Top-down 2D view of the 10x10 tabletop. Renders a world-state document
 * from the service (objects, arm, bin/shelf/button landmarks) and turns
 * clicks into waypoint-teaching callbacks.
 */

import { screenToTable, tableToScreen } from '../charts.js';

const SVG_NS = 'http://www.w3.org/2000/svg';
const SIZE = 260;

interface WorldObjectDoc {
  id: string;
  kind: string;
  position: [number, number];
  orientation: number;
  height: number;
}

interface WorldDoc {
  objects?: WorldObjectDoc[];
  arm_pose?: [number, number, number];
  held_object?: string | null;
}

export class WorkspaceView {
  readonly element: SVGSVGElement;
  private objectLayer: SVGGElement;
  private pendingLayer: SVGGElement;

  constructor(private onTeach: (x: number, y: number) => void) {
    this.element = document.createElementNS(SVG_NS, 'svg');
    this.element.setAttribute('viewBox', `0 0 ${SIZE} ${SIZE}`);
    this.element.setAttribute('class', 'workspace');
    const table = document.createElementNS(SVG_NS, 'rect');
    table.setAttribute('width', String(SIZE));
    table.setAttribute('height', String(SIZE));
    table.setAttribute('class', 'table');
    this.element.append(table);
    for (const [x, y, label] of [[9, 9, 'bin'], [1, 9, 'shelf'], [8, 2, 'button']] as const) {
      const [px, py] = tableToScreen(x, y, SIZE);
      const mark = document.createElementNS(SVG_NS, 'text');
      mark.setAttribute('x', String(px));
      mark.setAttribute('y', String(py));
      mark.setAttribute('class', 'landmark');
      mark.textContent = label;
      this.element.append(mark);
    }
    this.objectLayer = document.createElementNS(SVG_NS, 'g');
    this.pendingLayer = document.createElementNS(SVG_NS, 'g');
    this.element.append(this.objectLayer, this.pendingLayer);
    this.element.addEventListener('click', (event) => {
      const rect = this.element.getBoundingClientRect();
      const scale = SIZE / rect.width;
      const [x, y] = screenToTable((event.clientX - rect.left) * scale,
                                   (event.clientY - rect.top) * scale, SIZE);
      this.onTeach(x, y);
    });
  }

  render(world: Record<string, unknown>): void {
    const doc = world as WorldDoc;
    this.objectLayer.replaceChildren();
    for (const obj of doc.objects ?? []) {
      const [px, py] = tableToScreen(obj.position[0], obj.position[1], SIZE);
      const group = document.createElementNS(SVG_NS, 'g');
      const box = document.createElementNS(SVG_NS, 'rect');
      const side = obj.kind === 'book' ? 26 : 16;
      box.setAttribute('x', String(px - side / 2));
      box.setAttribute('y', String(py - side / 2));
      box.setAttribute('width', String(side));
      box.setAttribute('height', String(side * (obj.kind === 'book' ? 0.5 : 1)));
      box.setAttribute('class', `object ${obj.kind}`);
      box.setAttribute('transform',
                       `rotate(${obj.orientation} ${px} ${py})`);
      const tag = document.createElementNS(SVG_NS, 'text');
      tag.setAttribute('x', String(px));
      tag.setAttribute('y', String(py - side));
      tag.setAttribute('class', 'object-label');
      tag.textContent = obj.kind === 'box_stack' ? `${obj.id} (h=${obj.height})` : obj.id;
      group.append(box, tag);
      this.objectLayer.append(group);
    }
    if (doc.arm_pose) {
      const [px, py] = tableToScreen(doc.arm_pose[0], doc.arm_pose[1], SIZE);
      const arm = document.createElementNS(SVG_NS, 'circle');
      arm.setAttribute('cx', String(px));
      arm.setAttribute('cy', String(py));
      arm.setAttribute('r', '6');
      arm.setAttribute('class', doc.held_object ? 'arm holding' : 'arm');
      this.objectLayer.append(arm);
    }
  }

  showPending(waypoints: [number, number, number][]): void {
    this.pendingLayer.replaceChildren();
    waypoints.forEach(([x, y], i) => {
      const [px, py] = tableToScreen(x, y, SIZE);
      const dot = document.createElementNS(SVG_NS, 'circle');
      dot.setAttribute('cx', String(px));
      dot.setAttribute('cy', String(py));
      dot.setAttribute('r', '4');
      dot.setAttribute('class', 'waypoint');
      const tag = document.createElementNS(SVG_NS, 'text');
      tag.setAttribute('x', String(px + 6));
      tag.setAttribute('y', String(py - 6));
      tag.setAttribute('class', 'object-label');
      tag.textContent = String(i + 1);
      this.pendingLayer.append(dot, tag);
    });
  }
}
