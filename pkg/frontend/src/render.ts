import type { AppStore, QueueEntry } from './store.js';
import type { DocumentDetail, GraphPayload } from './types.js';
import type { Point } from './layout.js';

function esc(text: string): string {
  return text.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

/** Relevance 0..1 -> blue-to-red ramp used by the graph nodes. */
export function channelColor(value: number): string {
  const clamped = Math.min(Math.max(value, 0), 1);
  const red = Math.round(40 + 200 * clamped);
  const blue = Math.round(220 - 180 * clamped);
  return `rgb(${red}, 90, ${blue})`;
}

export function nodeChannelValue(
  node: GraphPayload['nodes'][number], channel: string,
): number {
  if (channel === 'average') return node.avg_relevance;
  return node.relevance[channel] ?? 0;
}

export function renderQueueList(queue: QueueEntry[], currentId: string | null): string {
  if (queue.length === 0) return '<p class="empty">Queue empty: everything is decided.</p>';
  const items = queue.map((entry) => {
    const cls = entry.docId === currentId ? ' class="current"' : '';
    return `<li${cls} data-doc="${esc(entry.docId)}">` +
      `<span class="score">${entry.score.toFixed(4)}</span> ${esc(entry.docId)}</li>`;
  });
  return `<ol class="queue">${items.join('')}</ol>`;
}

export function renderCard(doc: DocumentDetail, entry: QueueEntry | undefined): string {
  const meta: string[] = [];
  if (doc.year !== null) meta.push(String(doc.year));
  if (doc.venue) meta.push(esc(doc.venue));
  if (doc.doi) meta.push(esc(doc.doi));
  const bars = (entry?.contributions ?? []).map(([term, share]) => {
    const width = Math.round(Math.min(share, 1) * 100 * 4);
    return `<div class="bar-row"><span class="bar-term">${esc(term)}</span>` +
      `<span class="bar" style="width:${width}px"></span>` +
      `<span class="bar-value">${share.toFixed(4)}</span></div>`;
  }).join('');
  const similar = doc.similar.map((s) =>
    `<li data-doc="${esc(s.id)}">${esc(s.id)} (${s.similarity.toFixed(4)})</li>`).join('');
  return `
    <h2>${esc(doc.title)}</h2>
    <p class="meta">${esc(doc.authors.join(', '))}${meta.length ? ' · ' + meta.join(' · ') : ''}</p>
    <h3>Keyword contributions</h3>
    <div class="bars">${bars || '<p class="empty">No contributions.</p>'}</div>
    <h3>Most similar</h3>
    <ul class="similar">${similar || '<li class="empty">none</li>'}</ul>
    <div class="controls">
      <label>Note <input id="decision-note" type="text" placeholder="optional"></label>
      <button data-decision="included">Include</button>
      <button data-decision="excluded">Exclude</button>
      <button data-decision="deferred">Defer</button>
    </div>`;
}

export function renderWeightEditor(store: AppStore): string {
  const rq = store.rq(store.selectedRq);
  if (!rq) return '';
  const rows = rq.keywords.map((kw) => {
    const error = store.weightErrors.get(kw.raw);
    return `<div class="weight-row">
      <label>${esc(kw.raw)}
        <input type="number" step="0.1" min="0" data-keyword="${esc(kw.raw)}"
               value="${kw.weight}">
      </label>
      ${error ? `<span class="field-error">${esc(error)}</span>` : ''}
    </div>`;
  }).join('');
  return `${rows}<button id="apply-weights">Apply weights &amp; re-rank</button>`;
}

export function renderGraphSvg(
  graph: GraphPayload, positions: Map<string, Point>, channel: string,
  width: number, height: number,
): string {
  const edges = graph.links.map((link) => {
    const a = positions.get(link.source);
    const b = positions.get(link.target);
    if (!a || !b) return '';
    const opacity = (0.25 + link.similarity * 0.75).toFixed(3);
    return `<line x1="${a.x.toFixed(1)}" y1="${a.y.toFixed(1)}"` +
      ` x2="${b.x.toFixed(1)}" y2="${b.y.toFixed(1)}" stroke-opacity="${opacity}"/>`;
  }).join('');
  const nodes = graph.nodes.map((node) => {
    const p = positions.get(node.id);
    if (!p) return '';
    const value = nodeChannelValue(node, channel);
    const r = 6 + value * 10;
    return `<g class="node" data-doc="${esc(node.id)}">` +
      `<circle cx="${p.x.toFixed(1)}" cy="${p.y.toFixed(1)}" r="${r.toFixed(1)}"` +
      ` fill="${channelColor(value)}"><title>${esc(node.label)}</title></circle>` +
      `<text x="${(p.x + r + 2).toFixed(1)}" y="${(p.y + 3).toFixed(1)}">${esc(node.id)}</text></g>`;
  }).join('');
  return `<svg viewBox="0 0 ${width} ${height}" width="${width}" height="${height}">` +
    `<g class="links" stroke="#8296aa">${edges}</g><g class="nodes">${nodes}</g></svg>`;
}

export function renderChannelSelector(graph: GraphPayload, selected: string): string {
  const channels = new Set<string>(['average']);
  for (const node of graph.nodes) {
    for (const rq of Object.keys(node.relevance)) channels.add(rq);
  }
  return [...channels].map((channel) => {
    const checked = channel === selected ? ' checked' : '';
    return `<label class="channel"><input type="radio" name="channel"` +
      ` value="${esc(channel)}"${checked}> ${esc(channel)}</label>`;
  }).join('');
}
