/**
 * Pure view-model helpers for the dashboard charts. All values plotted come
 * straight from service payloads; these functions only map them to screen
 * coordinates and SVG path strings.
 */

import { EcmDocument } from './api.js';

export interface CurvePoint {
  episode: number;
  runningMean: number;
}

export function curvePath(points: CurvePoint[], width: number, height: number,
                          episodes: number): string {
  if (points.length === 0) return '';
  const x = (episode: number) => (episode / Math.max(episodes - 1, 1)) * width;
  const y = (mean: number) => height - mean * height;
  return points
    .map((p, i) => `${i === 0 ? 'M' : 'L'}${x(p.episode).toFixed(2)},${y(p.runningMean).toFixed(2)}`)
    .join(' ');
}

export interface BandNode {
  id: string;
  label: string;
  layer: number;
  x: number;
  y: number;
}

export interface BandEdge {
  from: BandNode;
  to: BandNode;
  p: number;
}

export interface BandLayout {
  nodes: BandNode[];
  edges: BandEdge[];
}

/**
 * Fixed five-band layout for the clip network: one horizontal band per layer,
 * clips spread evenly inside their band. Keeps layer semantics legible
 * instead of a force-directed tangle.
 */
export function layeredLayout(ecm: EcmDocument, width: number, height: number): BandLayout {
  const byLayer = new Map<number, typeof ecm.clips>();
  for (const clip of ecm.clips) {
    const bucket = byLayer.get(clip.layer) ?? [];
    bucket.push(clip);
    byLayer.set(clip.layer, bucket);
  }
  const nodes: BandNode[] = [];
  const index = new Map<string, BandNode>();
  for (const [layer, clips] of byLayer) {
    clips.forEach((clip, i) => {
      const node: BandNode = {
        id: clip.id,
        label: clip.label,
        layer,
        x: ((i + 1) / (clips.length + 1)) * width,
        y: ((layer - 0.5) / 5) * height,
      };
      nodes.push(node);
      index.set(clip.id, node);
    });
  }
  const edges: BandEdge[] = [];
  for (const edge of ecm.edges) {
    const from = index.get(edge.src);
    const to = index.get(edge.dst);
    if (from && to) edges.push({ from, to, p: edge.p });
  }
  return { nodes, edges };
}

export interface BlameBar {
  hypothesis: string;
  posterior: number;
  width: number;   // 0..1 of the chart width
}

export function blameBars(top: [string, number][], limit = 12): BlameBar[] {
  const rows = top.slice(0, limit);
  const max = rows.length ? rows[0][1] : 1;
  return rows.map(([hypothesis, posterior]) => ({
    hypothesis,
    posterior,
    width: max > 0 ? posterior / max : 0,
  }));
}

/** Workspace projection: 10x10 table coordinates to pixels (y up). */
export function tableToScreen(x: number, y: number, size: number): [number, number] {
  return [(x / 10) * size, size - (y / 10) * size];
}

export function screenToTable(px: number, py: number, size: number): [number, number] {
  const x = (px / size) * 10;
  const y = ((size - py) / size) * 10;
  const clamp = (v: number) => Math.min(10, Math.max(0, v));
  return [Number(clamp(x).toFixed(2)), Number(clamp(y).toFixed(2))];
}
