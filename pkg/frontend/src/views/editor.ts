/**
 * Block editor: palette on the left, canvas tree in the middle, skill
 * suggestions and validation feedback on the right. Blocks are added by
 * clicking palette entries (or dragging, both paths run the same gesture),
 * parameters are edited inline, and the engine's validation diagnostics are
 * rendered next to the offending block path.
 */

import { Api, ApiError } from '../api.js';
import { AstNode, LoopNode, parseProgram, ProgramDocument } from '../ast.js';
import {
  behaviourCall, BlockDocument, GestureError, hardwareDecl, PaletteSnapshot,
} from '../blocks.js';
import { WorkspaceView } from './workspace.js';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, className?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class EditorView {
  doc!: BlockDocument;
  programId: string | null = null;
  private feedback = el('div', 'feedback');
  private canvas = el('div', 'canvas');
  private suggestions = el('div', 'suggestions');
  private workspace: WorkspaceView;
  private scenarioSelect = el('select');
  private pendingWaypoints: [number, number, number][] = [];

  constructor(private root: HTMLElement, private api: Api) {
    this.workspace = new WorkspaceView((x, y) => this.addWaypoint(x, y));
  }

  async mount(): Promise<void> {
    const [behaviours, skills, hardware] = await Promise.all([
      this.api.behaviours(), this.api.skills(), this.api.hardware()]);
    const palette: PaletteSnapshot = { behaviours, skills, hardware };
    this.doc = new BlockDocument(palette);
    this.restoreDraft();

    const layout = el('div', 'editor-layout');
    layout.append(
      this.renderPalette(palette),
      this.renderCanvasColumn(),
      this.renderSidebar(),
    );
    this.root.replaceChildren(layout);
    this.refresh();
  }

  private renderPalette(palette: PaletteSnapshot): HTMLElement {
    const panel = el('div', 'panel palette');
    panel.append(el('h3', undefined, 'Palette'));

    const hw = el('div', 'palette-group');
    hw.append(el('h4', undefined, 'hardware'));
    for (const handle of palette.hardware) {
      const chip = el('button', 'block hardware', handle.name);
      chip.addEventListener('click', () => this.gesture(() => {
        this.doc.appendBlock(hardwareDecl([handle.name]));
      }));
      hw.append(chip);
    }
    panel.append(hw);

    for (const [category, entries] of Object.entries(palette.behaviours)) {
      const group = el('div', 'palette-group');
      group.append(el('h4', undefined, category));
      for (const entry of entries) {
        const chip = el('button', 'block behaviour', entry.id);
        chip.title = `needs ${entry.required_hardware.join(', ') || 'nothing'}`;
        chip.addEventListener('click', () => this.gesture(() => {
          const params: Record<string, never> = {};
          this.doc.appendBlock(behaviourCall(entry.id, params));
        }));
        group.append(chip);
      }
      panel.append(group);
    }

    const loops = el('div', 'palette-group');
    loops.append(el('h4', undefined, 'control'));
    const loopChip = el('button', 'block control', 'loop xN');
    loopChip.addEventListener('click', () => this.gesture(() => {
      const body: AstNode = { kind: 'sequence', children: [] };
      const loop: LoopNode = { kind: 'loop', count: 2, body };
      this.doc.appendBlock(loop);
    }));
    loops.append(loopChip);
    panel.append(loops);
    return panel;
  }

  private renderCanvasColumn(): HTMLElement {
    const column = el('div', 'panel canvas-column');
    const toolbar = el('div', 'toolbar');
    for (const scenario of ['flat', 'book', 'tower', 'box']) {
      const option = el('option', undefined, scenario);
      option.value = scenario;
      this.scenarioSelect.append(option);
    }
    const save = el('button', 'action', 'Save program');
    save.addEventListener('click', () => void this.save());
    const run = el('button', 'action', 'Run all');
    run.addEventListener('click', () => void this.runTo(this.doc.root.children.length));
    toolbar.append(this.scenarioSelect, save, run);
    column.append(el('h3', undefined, 'Program'), toolbar, this.canvas, this.feedback);
    return column;
  }

  private renderSidebar(): HTMLElement {
    const sidebar = el('div', 'panel sidebar');
    sidebar.append(el('h3', undefined, 'Suggested skills'), this.suggestions,
                   el('h3', undefined, 'Workspace'), this.workspace.element);
    const done = el('button', 'action', 'Insert taught waypoints');
    done.addEventListener('click', () => this.insertWaypoints());
    sidebar.append(done);
    return sidebar;
  }

  private gesture(fn: () => void): void {
    try {
      fn();
      this.feedback.textContent = '';
    } catch (err) {
      if (err instanceof GestureError) {
        this.feedback.textContent = `rejected: ${err.message}`;
        return;
      }
      throw err;
    }
    this.refresh();
  }

  private refresh(): void {
    this.renderTree();
    void this.refreshSuggestions();
    this.saveDraft();
  }

  private renderTree(): void {
    this.canvas.replaceChildren();
    this.doc.root.children.forEach((node, i) => {
      this.canvas.append(this.renderNode(node, [i]));
    });
    if (this.doc.root.children.length === 0) {
      this.canvas.append(el('div', 'empty', 'drop blocks here'));
    }
  }

  private renderNode(node: AstNode, path: number[]): HTMLElement {
    const row = el('div', `node ${node.kind}`);
    const header = el('div', 'node-header');
    header.append(el('span', 'kind', this.describe(node)));

    const runTo = el('button', 'mini', 'run to here');
    runTo.title = 'execute the program up to and including this block';
    runTo.addEventListener('click', () => void this.runTo(path[0] + 1));
    const remove = el('button', 'mini', 'x');
    remove.addEventListener('click', () => this.gesture(() => {
      this.doc.removeBlock(path);
    }));
    if (path.length === 1) header.append(runTo);
    header.append(remove);
    row.append(header);

    if (node.kind === 'behaviour') {
      const entry = this.doc.palette.behaviours;
      const schema = Object.values(entry).flat().find((e) => e.id === node.behaviour);
      for (const spec of schema?.parameters ?? []) {
        const label = el('label', 'param', `${spec.name}: `);
        const input = el('input');
        input.value = node.params[spec.name] !== undefined
          ? JSON.stringify(node.params[spec.name]) : '';
        input.placeholder = spec.type;
        input.addEventListener('change', () => this.gesture(() => {
          const raw = input.value.trim();
          const value = raw === '' ? undefined : JSON.parse(raw);
          if (value !== undefined) this.doc.setParam(path, spec.name, value);
        }));
        label.append(input);
        row.append(label);
      }
    }
    if (node.kind === 'loop') {
      const label = el('label', 'param', 'count: ');
      const input = el('input');
      input.value = String(node.count ?? '');
      input.addEventListener('change', () => this.gesture(() => {
        node.count = Number(input.value);
        this.doc.noteValidation('ok');
      }));
      label.append(input);
      row.append(label);
      const body = el('div', 'loop-body');
      if (node.body.kind === 'sequence') {
        node.body.children.forEach((child, i) => {
          body.append(this.renderNode(child, [...path, 0, i]));
        });
      } else {
        body.append(this.renderNode(node.body, [...path, 0]));
      }
      row.append(body);
    }
    return row;
  }

  private describe(node: AstNode): string {
    switch (node.kind) {
      case 'behaviour': return node.behaviour;
      case 'skill': return `skill: ${node.skill}`;
      case 'hardware': return `hardware: ${node.names.join(', ')}`;
      case 'loop': return 'loop';
      case 'waypoints': return `waypoints (${node.waypoints.length})`;
      case 'sequence': return 'sequence';
    }
  }

  private async refreshSuggestions(): Promise<void> {
    // exactly the engine's hardware-based suggestion list, never recomputed
    const declared = this.doc.declaredHardware();
    const skills = await this.api.skills(declared);
    this.suggestions.replaceChildren();
    for (const skill of skills) {
      const chip = el('button', 'block skill', skill.id);
      chip.addEventListener('click', () => this.gesture(() => {
        this.doc.appendBlock({ kind: 'skill', skill: skill.id });
      }));
      this.suggestions.append(chip);
    }
    if (!skills.length) {
      this.suggestions.append(el('div', 'empty', 'declare hardware to see skills'));
    }
  }

  private async save(): Promise<string | null> {
    const doc = this.doc.toProgram();
    try {
      if (this.programId) {
        await this.api.updateProgram(this.programId, doc);
      } else {
        this.programId = (await this.api.saveProgram(doc)).id;
      }
      this.doc.noteValidation('ok');
      this.doc.dirty = false;
      this.feedback.textContent = `saved as ${this.programId}`;
      return this.programId;
    } catch (err) {
      if (err instanceof ApiError && err.body.diagnostics) {
        this.doc.noteValidation(err.body.diagnostics);
        this.feedback.textContent = err.body.diagnostics
          .map((d) => `${d.path}: ${d.message}`).join('\n');
        return null;
      }
      throw err;
    }
  }

  /** Execute the program up to (exclusive) top-level block index `limit`. */
  private async runTo(limit: number): Promise<void> {
    if (this.doc.root.children.length === 0) {
      this.feedback.textContent = 'nothing to run: the canvas is empty';
      return;
    }
    const partial = new BlockDocument(this.doc.palette);
    partial.root = {
      kind: 'sequence',
      children: this.doc.root.children.slice(0, limit),
    };
    let saved: { id: string };
    try {
      saved = await this.api.saveProgram(partial.toProgram());
    } catch (err) {
      if (err instanceof ApiError && err.body.diagnostics) {
        this.feedback.textContent = err.body.diagnostics
          .map((d) => `${d.path}: ${d.message}`).join('\n');
        return;
      }
      throw err;
    }
    const ref = await this.api.runProgram(saved.id, this.scenarioSelect.value);
    const stream = this.api.stream(ref.session);
    stream.onDone(() => {
      const last = stream.events[stream.events.length - 1];
      const payload = last.payload as {
        success?: boolean; failure_reason?: string;
        world?: Record<string, unknown>;
      };
      if (payload.world) this.workspace.render(payload.world);
      this.feedback.textContent = payload.success
        ? `run finished after block ${limit}; click the workspace to teach waypoints`
        : `failed: ${payload.failure_reason ?? 'see record'}`;
    });
    stream.start();
  }

  private addWaypoint(x: number, y: number): void {
    this.pendingWaypoints.push([x, y, 1.0]);
    this.workspace.showPending(this.pendingWaypoints);
  }

  private insertWaypoints(): void {
    if (!this.pendingWaypoints.length) {
      this.feedback.textContent = 'click the workspace first to record waypoints';
      return;
    }
    this.gesture(() => {
      this.doc.appendBlock({ kind: 'waypoints', waypoints: [...this.pendingWaypoints] });
      this.pendingWaypoints = [];
      this.workspace.showPending([]);
    });
  }

  private draftKey(): string {
    return `skillforge-draft-${this.programId ?? 'new'}`;
  }

  private saveDraft(): void {
    try {
      localStorage.setItem(this.draftKey(), JSON.stringify(this.doc.toProgram()));
    } catch {
      /* storage may be unavailable; drafts are best-effort */
    }
  }

  private restoreDraft(): void {
    try {
      const raw = localStorage.getItem(this.draftKey());
      if (!raw) return;
      const root = parseProgram(JSON.parse(raw) as ProgramDocument);
      if (root.kind === 'sequence') this.doc.root = root;
    } catch {
      /* ignore broken drafts */
    }
  }
}
