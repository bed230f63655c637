/**
 * Block-document model behind the editor canvas.
 *
 * The canvas tree mirrors the program AST one to one. Gestures (insert,
 * remove, move, edit parameter) are validated against the palette before they
 * touch the tree, so an invalid gesture never leaves the document in a state
 * that fails engine validation for structural reasons; referential checks
 * stay with the engine, whose diagnostics are stored on the document.
 */

import {
  AstNode, BehaviourNode, HardwareNode, LOOP_MAX_COUNT, ProgramDocument,
  SequenceNode, serializeProgram,
} from './ast.js';

export interface ParamSchema {
  name: string;
  type: 'int' | 'real' | 'vec2' | 'enum' | string;
  required: boolean;
  default: unknown;
  choices: string[] | null;
}

export interface PaletteEntry {
  id: string;
  required_hardware: string[];
  duration_ticks: number;
  parameters: ParamSchema[];
}

export interface SkillInfo {
  id: string;
  required_hardware: string[];
  trained: boolean;
  promoted: boolean;
}

export interface PaletteSnapshot {
  behaviours: Record<string, PaletteEntry[]>;   // grouped by category
  skills: SkillInfo[];
  hardware: { name: string; kind: string; channels: string[] }[];
}

export interface Diagnostic {
  path: string;
  message: string;
}

export class GestureError extends Error {}

export type BlockPath = number[];   // child indices from the root sequence

export class BlockDocument {
  root: SequenceNode = { kind: 'sequence', children: [] };
  dirty = false;
  lastValidation: Diagnostic[] | 'ok' | null = null;

  constructor(public palette: PaletteSnapshot) {}

  private entryFor(behaviour: string): PaletteEntry {
    for (const group of Object.values(this.palette.behaviours)) {
      const entry = group.find((e) => e.id === behaviour);
      if (entry) return entry;
    }
    throw new GestureError(`behaviour '${behaviour}' is not in the palette`);
  }

  private containerAt(path: BlockPath): SequenceNode {
    let node: AstNode = this.root;
    for (const index of path) {
      if (node.kind === 'sequence') {
        const child: AstNode | undefined = node.children[index];
        if (!child) throw new GestureError(`no block at index ${index}`);
        node = child;
      } else if (node.kind === 'loop') {
        if (index !== 0) throw new GestureError('loops hold a single body');
        node = node.body;
      } else {
        throw new GestureError(`block of kind '${node.kind}' has no children`);
      }
    }
    if (node.kind !== 'sequence') {
      throw new GestureError(`block of kind '${node.kind}' is not a container`);
    }
    return node;
  }

  nodeAt(path: BlockPath): AstNode {
    if (path.length === 0) return this.root;
    const parent = this.containerAt(path.slice(0, -1));
    const node = parent.children[path[path.length - 1]];
    if (!node) throw new GestureError(`no block at [${path.join(', ')}]`);
    return node;
  }

  private checkNode(node: AstNode): void {
    if (node.kind === 'behaviour') {
      const entry = this.entryFor(node.behaviour);
      for (const spec of entry.parameters) {
        const value = node.params[spec.name];
        if (value === undefined) {
          if (spec.required) throw new GestureError(`parameter '${spec.name}' is required`);
          continue;
        }
        this.checkParam(spec, value);
      }
      for (const name of Object.keys(node.params)) {
        if (!entry.parameters.some((p) => p.name === name)) {
          throw new GestureError(`unknown parameter '${name}'`);
        }
      }
    } else if (node.kind === 'skill') {
      if (!this.palette.skills.some((s) => s.id === node.skill)) {
        throw new GestureError(`skill '${node.skill}' is not in the palette`);
      }
    } else if (node.kind === 'hardware') {
      for (const name of node.names) {
        if (!this.palette.hardware.some((h) => h.name === name)) {
          throw new GestureError(`unknown hardware '${name}'`);
        }
      }
    } else if (node.kind === 'loop') {
      if (node.count === undefined && node.while === undefined) {
        throw new GestureError("loop needs a count or a predicate");
      }
      if (node.count !== undefined
          && (!Number.isInteger(node.count) || node.count < 1
              || node.count > LOOP_MAX_COUNT)) {
        throw new GestureError(`loop count must be in [1, ${LOOP_MAX_COUNT}]`);
      }
      this.checkNode(node.body);
    } else if (node.kind === 'sequence') {
      node.children.forEach((c) => this.checkNode(c));
    } else if (node.kind === 'waypoints') {
      if (node.waypoints.length === 0) {
        throw new GestureError('waypoint motion needs at least one waypoint');
      }
    }
  }

  private checkParam(spec: ParamSchema, value: unknown): void {
    if (spec.type === 'int') {
      if (!Number.isInteger(value)) throw new GestureError(`'${spec.name}' must be an integer`);
    } else if (spec.type === 'real') {
      if (typeof value !== 'number') throw new GestureError(`'${spec.name}' must be a number`);
    } else if (spec.type === 'vec2') {
      if (!Array.isArray(value) || value.length !== 2
          || !value.every((v) => typeof v === 'number')) {
        throw new GestureError(`'${spec.name}' must be [x, y]`);
      }
    } else if (spec.type === 'enum') {
      if (!spec.choices?.some((c) => String(c) === String(value))) {
        throw new GestureError(`'${spec.name}' must be one of ${spec.choices?.join(', ')}`);
      }
    }
  }

  insertBlock(containerPath: BlockPath, index: number, node: AstNode): void {
    const container = this.containerAt(containerPath);
    if (index < 0 || index > container.children.length) {
      throw new GestureError(`insert index ${index} out of range`);
    }
    this.checkNode(node);
    container.children.splice(index, 0, node);
    this.touch();
  }

  appendBlock(node: AstNode): void {
    this.insertBlock([], this.root.children.length, node);
  }

  removeBlock(path: BlockPath): AstNode {
    if (path.length === 0) throw new GestureError('cannot remove the root');
    const parent = this.containerAt(path.slice(0, -1));
    const index = path[path.length - 1];
    if (index < 0 || index >= parent.children.length) {
      throw new GestureError(`no block at index ${index}`);
    }
    const [removed] = parent.children.splice(index, 1);
    this.touch();
    return removed;
  }

  moveBlock(from: BlockPath, toContainer: BlockPath, toIndex: number): void {
    const node = this.removeBlock(from);
    try {
      this.insertBlock(toContainer, toIndex, node);
    } catch (err) {
      // put it back where it was so a rejected drop never loses the block
      const parent = this.containerAt(from.slice(0, -1));
      parent.children.splice(from[from.length - 1], 0, node);
      throw err;
    }
  }

  setParam(path: BlockPath, name: string, value: unknown): void {
    const node = this.nodeAt(path);
    if (node.kind !== 'behaviour') {
      throw new GestureError('only behaviour blocks take parameters');
    }
    const entry = this.entryFor(node.behaviour);
    const spec = entry.parameters.find((p) => p.name === name);
    if (!spec) throw new GestureError(`unknown parameter '${name}'`);
    this.checkParam(spec, value);
    node.params[name] = value as BehaviourNode['params'][string];
    this.touch();
  }

  declaredHardware(): string[] {
    const names = new Set<string>();
    const walk = (node: AstNode): void => {
      if (node.kind === 'hardware') node.names.forEach((n) => names.add(n));
      if (node.kind === 'sequence') node.children.forEach(walk);
      if (node.kind === 'loop') walk(node.body);
    };
    walk(this.root);
    return [...names].sort();
  }

  /** Hardware-coverage check mirrored for inline feedback; the engine's
   *  validation stays authoritative. */
  uncoveredCalls(): Diagnostic[] {
    const out: Diagnostic[] = [];
    const skillHardware = new Map(this.palette.skills.map(
      (s) => [s.id, s.required_hardware]));
    const walk = (node: AstNode, path: string, scope: Set<string>): void => {
      if (node.kind === 'sequence') {
        const inner = new Set(scope);
        node.children.forEach((c) => {
          if (c.kind === 'hardware') c.names.forEach((n) => inner.add(n));
        });
        node.children.forEach((c, i) => walk(c, `${path}.children[${i}]`, inner));
      } else if (node.kind === 'loop') {
        walk(node.body, `${path}.body`, scope);
      } else if (node.kind === 'behaviour') {
        const required = this.entryFor(node.behaviour).required_hardware;
        const missing = required.filter((n) => !scope.has(n));
        if (missing.length) {
          out.push({ path, message: `hardware [${missing.join(', ')}] not declared` });
        }
      } else if (node.kind === 'skill') {
        const required = skillHardware.get(node.skill) ?? [];
        const missing = required.filter((n) => !scope.has(n));
        if (missing.length) {
          out.push({ path, message: `hardware [${missing.join(', ')}] not declared` });
        }
      } else if (node.kind === 'waypoints' && !scope.has('left_arm')) {
        out.push({ path, message: "waypoint motion requires 'left_arm' declared" });
      }
    };
    walk(this.root, '$.root', new Set());
    return out;
  }

  toProgram(): ProgramDocument {
    return serializeProgram(this.root);
  }

  noteValidation(result: Diagnostic[] | 'ok'): void {
    this.lastValidation = result;
  }

  private touch(): void {
    this.dirty = true;
    this.lastValidation = null;
  }
}

/** Blocks for a hardware declaration gesture. */
export function hardwareDecl(names: string[]): HardwareNode {
  return { kind: 'hardware', names: [...names] };
}

export function behaviourCall(
  behaviour: string, params: Record<string, BehaviourNode['params'][string]> = {},
): BehaviourNode {
  return { kind: 'behaviour', behaviour, params: { ...params } };
}
