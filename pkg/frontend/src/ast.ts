/**
 * Program AST wire format, mirrored from the engine.
 *
 * The JSON document shape ("ast_version": 1, node objects with "kind") is the
 * contract between this editor and the service; parse/serialize must
 * round-trip every document the editor can produce.
 */

export const AST_VERSION = 1;
export const LOOP_MAX_COUNT = 1000;

export type ParamValue = number | string | [number, number];

export interface SequenceNode {
  kind: 'sequence';
  children: AstNode[];
}

export interface LoopNode {
  kind: 'loop';
  body: AstNode;
  count?: number;
  while?: string;
}

export interface BehaviourNode {
  kind: 'behaviour';
  behaviour: string;
  params: Record<string, ParamValue>;
}

export interface SkillNode {
  kind: 'skill';
  skill: string;
}

export interface HardwareNode {
  kind: 'hardware';
  names: string[];
}

export interface WaypointsNode {
  kind: 'waypoints';
  waypoints: [number, number, number][];
}

export type AstNode =
  | SequenceNode
  | LoopNode
  | BehaviourNode
  | SkillNode
  | HardwareNode
  | WaypointsNode;

export interface ProgramDocument {
  ast_version: number;
  root: unknown;
}

export class AstError extends Error {
  constructor(public path: string, message: string) {
    super(`${path}: ${message}`);
  }
}

function parseNode(doc: unknown, path: string): AstNode {
  if (typeof doc !== 'object' || doc === null || !('kind' in doc)) {
    throw new AstError(path, "node must be an object with a 'kind'");
  }
  const node = doc as Record<string, unknown>;
  switch (node.kind) {
    case 'sequence': {
      if (!Array.isArray(node.children)) {
        throw new AstError(path, "sequence requires a 'children' list");
      }
      return {
        kind: 'sequence',
        children: node.children.map((c, i) => parseNode(c, `${path}.children[${i}]`)),
      };
    }
    case 'loop': {
      if (node.body === undefined) throw new AstError(path, "loop requires a 'body'");
      const out: LoopNode = { kind: 'loop', body: parseNode(node.body, `${path}.body`) };
      if (node.count !== undefined) {
        const count = node.count;
        if (typeof count !== 'number' || !Number.isInteger(count)
            || count < 1 || count > LOOP_MAX_COUNT) {
          throw new AstError(path, `loop count must be an integer in [1, ${LOOP_MAX_COUNT}]`);
        }
        out.count = count;
      }
      if (node.while !== undefined) {
        if (typeof node.while !== 'string') throw new AstError(path, "'while' must be a predicate id");
        out.while = node.while;
      }
      if (out.count === undefined && out.while === undefined) {
        throw new AstError(path, "loop requires 'count' or 'while'");
      }
      return out;
    }
    case 'behaviour': {
      if (typeof node.behaviour !== 'string') {
        throw new AstError(path, "behaviour call requires a 'behaviour' id");
      }
      const params = (node.params ?? {}) as Record<string, ParamValue>;
      if (typeof params !== 'object' || Array.isArray(params)) {
        throw new AstError(path, "'params' must be an object");
      }
      return { kind: 'behaviour', behaviour: node.behaviour, params: { ...params } };
    }
    case 'skill': {
      if (typeof node.skill !== 'string') {
        throw new AstError(path, "skill call requires a 'skill' id");
      }
      return { kind: 'skill', skill: node.skill };
    }
    case 'hardware': {
      if (!Array.isArray(node.names) || !node.names.every((n) => typeof n === 'string')) {
        throw new AstError(path, 'hardware declaration requires a list of names');
      }
      return { kind: 'hardware', names: [...(node.names as string[])] };
    }
    case 'waypoints': {
      const wps = node.waypoints;
      if (!Array.isArray(wps) || wps.length === 0
          || !wps.every((w) => Array.isArray(w) && w.length === 3
                        && w.every((v) => typeof v === 'number'))) {
        throw new AstError(path, 'waypoint motion requires a non-empty list of [x, y, z]');
      }
      return { kind: 'waypoints', waypoints: wps.map((w) => [w[0], w[1], w[2]]) };
    }
    default:
      throw new AstError(path, `unknown node kind '${String(node.kind)}'`);
  }
}

export function parseProgram(doc: ProgramDocument): AstNode {
  if (doc.ast_version !== AST_VERSION) {
    throw new AstError('$.ast_version', `expected ast_version ${AST_VERSION}`);
  }
  return parseNode(doc.root, '$.root');
}

export function serializeNode(node: AstNode): Record<string, unknown> {
  switch (node.kind) {
    case 'sequence':
      return { kind: 'sequence', children: node.children.map(serializeNode) };
    case 'loop': {
      const out: Record<string, unknown> = { kind: 'loop', body: serializeNode(node.body) };
      if (node.count !== undefined) out.count = node.count;
      if (node.while !== undefined) out.while = node.while;
      return out;
    }
    case 'behaviour':
      return { kind: 'behaviour', behaviour: node.behaviour, params: { ...node.params } };
    case 'skill':
      return { kind: 'skill', skill: node.skill };
    case 'hardware':
      return { kind: 'hardware', names: [...node.names] };
    case 'waypoints':
      return { kind: 'waypoints', waypoints: node.waypoints.map((w) => [...w]) };
  }
}

export function serializeProgram(root: AstNode): ProgramDocument {
  return { ast_version: AST_VERSION, root: serializeNode(root) };
}
