import type { GraphLink, GraphNode } from './types.js';

export interface Point {
  x: number;
  y: number;
}

export interface LayoutOptions {
  width: number;
  height: number;
  iterations?: number;
  seed?: number;
}

/** Deterministic 32-bit PRNG so layouts are reproducible in tests. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/**
 * Small force-directed layout: seeded initial placement, a fixed number of
 * iterations of pairwise repulsion plus spring attraction along links
 * (stronger springs for more similar documents), then recentring. Same
 * input and seed always produce the same positions.
 */
export function layoutGraph(
  nodes: GraphNode[],
  links: GraphLink[],
  options: LayoutOptions,
): Map<string, Point> {
  const { width, height } = options;
  const iterations = options.iterations ?? 150;
  const rand = mulberry32(options.seed ?? 42);
  const positions = new Map<string, Point>();
  const order = [...nodes].sort((a, b) => (a.id < b.id ? -1 : 1));
  for (const node of order) {
    positions.set(node.id, {
      x: width / 2 + (rand() - 0.5) * width * 0.8,
      y: height / 2 + (rand() - 0.5) * height * 0.8,
    });
  }
  if (order.length <= 1) return positions;

  const area = width * height;
  const k = Math.sqrt(area / order.length) * 0.6;
  for (let iter = 0; iter < iterations; iter++) {
    const cooling = 1 - iter / iterations;
    const step = 0.1 * k * cooling;
    const force = new Map<string, Point>(order.map((n) => [n.id, { x: 0, y: 0 }]));
    for (let i = 0; i < order.length; i++) {
      for (let j = i + 1; j < order.length; j++) {
        const a = positions.get(order[i]!.id)!;
        const b = positions.get(order[j]!.id)!;
        let dx = a.x - b.x;
        let dy = a.y - b.y;
        let dist = Math.sqrt(dx * dx + dy * dy);
        if (dist < 1e-6) {
          dx = 1e-3;
          dy = 1e-3;
          dist = Math.SQRT2 * 1e-3;
        }
        const repulse = (k * k) / dist;
        const fa = force.get(order[i]!.id)!;
        const fb = force.get(order[j]!.id)!;
        fa.x += (dx / dist) * repulse;
        fa.y += (dy / dist) * repulse;
        fb.x -= (dx / dist) * repulse;
        fb.y -= (dy / dist) * repulse;
      }
    }
    for (const link of links) {
      const a = positions.get(link.source);
      const b = positions.get(link.target);
      if (!a || !b) continue;
      const dx = b.x - a.x;
      const dy = b.y - a.y;
      const dist = Math.max(Math.sqrt(dx * dx + dy * dy), 1e-6);
      const pull = ((dist * dist) / k) * Math.min(Math.max(link.similarity, 0.05), 1) * 0.05;
      const fa = force.get(link.source);
      const fb = force.get(link.target);
      if (!fa || !fb) continue;
      fa.x += (dx / dist) * pull;
      fa.y += (dy / dist) * pull;
      fb.x -= (dx / dist) * pull;
      fb.y -= (dy / dist) * pull;
    }
    for (const node of order) {
      const p = positions.get(node.id)!;
      const f = force.get(node.id)!;
      const mag = Math.max(Math.sqrt(f.x * f.x + f.y * f.y), 1e-6);
      const capped = Math.min(mag, step);
      p.x += (f.x / mag) * capped;
      p.y += (f.y / mag) * capped;
      p.x = Math.min(Math.max(p.x, 20), width - 20);
      p.y = Math.min(Math.max(p.y, 20), height - 20);
    }
  }
  return positions;
}
