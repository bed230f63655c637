import { readFileSync } from 'node:fs';
import path from 'node:path';
import { describe, expect, it } from 'vitest';

import {
  AstNode, parseProgram, ProgramDocument, serializeProgram,
} from '../src/ast.js';
import { behaviourCall, BlockDocument, hardwareDecl, PaletteSnapshot } from '../src/blocks.js';

const golden = (name: string): ProgramDocument =>
  JSON.parse(readFileSync(path.join(__dirname, '..', '..', 'golden', name), 'utf8'));

const palette: PaletteSnapshot =
  JSON.parse(readFileSync(path.join(__dirname, 'fixtures', 'palette.json'), 'utf8'));

// deterministic generator for random documents (mulberry32)
function rng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function randomNode(rand: () => number, depth: number): AstNode {
  const kinds = depth < 3
    ? ['sequence', 'loop', 'behaviour', 'hardware', 'waypoints', 'skill']
    : ['behaviour', 'hardware', 'waypoints', 'skill'];
  const kind = kinds[Math.floor(rand() * kinds.length)];
  switch (kind) {
    case 'sequence':
      return {
        kind: 'sequence',
        children: Array.from({ length: 1 + Math.floor(rand() * 3) },
                             () => randomNode(rand, depth + 1)),
      };
    case 'loop':
      return rand() < 0.5
        ? { kind: 'loop', count: 1 + Math.floor(rand() * 9), body: randomNode(rand, depth + 1) }
        : { kind: 'loop', while: 'scan_complete', body: randomNode(rand, depth + 1) };
    case 'behaviour':
      return {
        kind: 'behaviour',
        behaviour: 'cartesian_ptp',
        params: rand() < 0.5 ? {} : { goal: [Number(rand().toFixed(3)) * 10, 5] },
      };
    case 'skill':
      return { kind: 'skill', skill: 'simple_grasp' };
    case 'hardware':
      return { kind: 'hardware', names: ['left_arm', 'camera'] };
    default:
      return {
        kind: 'waypoints',
        waypoints: [[1, 2, 3], [Number((rand() * 10).toFixed(2)), 5, 1]],
      };
  }
}

describe('ast wire format', () => {
  it('round-trips every generated document', () => {
    const rand = rng(1234);
    for (let i = 0; i < 200; i += 1) {
      const doc = serializeProgram(randomNode(rand, 0));
      expect(serializeProgram(parseProgram(doc))).toEqual(doc);
    }
  });

  it('round-trips the committed golden programs', () => {
    for (const name of ['simple_grasp.ast.json', 'pick_and_place.ast.json']) {
      const doc = golden(name);
      expect(serializeProgram(parseProgram(doc))).toEqual(doc);
    }
  });

  it('rejects malformed documents with a path', () => {
    expect(() => parseProgram({ ast_version: 2, root: { kind: 'sequence', children: [] } }))
      .toThrowError(/ast_version/);
    expect(() => parseProgram({
      ast_version: 1,
      root: { kind: 'loop', body: { kind: 'sequence', children: [] } },
    })).toThrowError(/count.*or.*while|'count' or 'while'/);
  });
});

describe('editor fidelity against the golden programs', () => {
  it('builds the simple-grasp program exactly', () => {
    const doc = new BlockDocument(palette);
    doc.appendBlock(hardwareDecl(['left_arm', 'left_hand', 'camera']));
    doc.appendBlock(behaviourCall('move_home'));
    doc.appendBlock(behaviourCall('localise_object'));
    doc.appendBlock(behaviourCall('cartesian_ptp'));
    doc.appendBlock(behaviourCall('close_hand'));
    expect(doc.toProgram()).toEqual(golden('simple_grasp.ast.json'));
  });

  it('builds the pick-and-place program (nested skill) exactly', () => {
    const doc = new BlockDocument(palette);
    doc.appendBlock(hardwareDecl(['left_arm', 'left_hand', 'camera']));
    doc.appendBlock({ kind: 'skill', skill: 'simple_grasp' });
    doc.appendBlock(behaviourCall('cartesian_ptp', { goal: [9.0, 9.0] }));
    doc.appendBlock(behaviourCall('open_hand'));
    expect(doc.toProgram()).toEqual(golden('pick_and_place.ast.json'));
  });
});
