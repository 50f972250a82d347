import { ApiClient } from './api.js';
import { AppStore } from './store.js';
import { layoutGraph } from './layout.js';
import {
  renderCard, renderChannelSelector, renderGraphSvg, renderQueueList,
  renderWeightEditor,
} from './render.js';
import type { Decision } from './types.js';

const GRAPH_W = 760;
const GRAPH_H = 520;

const store = new AppStore(new ApiClient(''));

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

let cardDocId: string | null = null;

async function refreshCard(docId: string | null): Promise<void> {
  cardDocId = docId;
  const card = el('card');
  if (!docId) {
    card.innerHTML = '<p class="empty">Nothing to review.</p>';
    return;
  }
  const detail = await new ApiClient('').getDocument(docId);
  const entry = store.queue().find((e) => e.docId === docId);
  card.innerHTML = renderCard(detail, entry);
}

function refreshQueue(): void {
  el('queue').innerHTML = renderQueueList(store.queue(), cardDocId);
}

function refreshGraph(): void {
  const positions = layoutGraph(store.graph.nodes, store.graph.links,
    { width: GRAPH_W, height: GRAPH_H, seed: 42 });
  el('graph').innerHTML = renderGraphSvg(store.graph, positions,
    store.selectedChannel, GRAPH_W, GRAPH_H);
  el('channels').innerHTML = renderChannelSelector(store.graph, store.selectedChannel);
}

function refreshWeights(): void {
  el('weights').innerHTML = renderWeightEditor(store);
}

function refreshBanner(): void {
  const banner = el('banner');
  if (store.pendingRetry) {
    banner.innerHTML = `<span>${store.lastError}</span> ` +
      '<button id="retry-decision">Retry</button>';
    banner.className = 'banner warn';
  } else if (store.lastError) {
    banner.textContent = store.lastError;
    banner.className = 'banner error';
  } else {
    banner.textContent = '';
    banner.className = 'banner';
  }
}

function refreshRqSelector(): void {
  el('rq-select').innerHTML = store.rqs.map((rq) => {
    const selected = rq.id === store.selectedRq ? ' selected' : '';
    return `<option value="${rq.id}"${selected}>${rq.id}: ${rq.text}</option>`;
  }).join('');
}

async function refreshAll(): Promise<void> {
  refreshRqSelector();
  refreshWeights();
  refreshGraph();
  refreshBanner();
  refreshQueue();
  await refreshCard(store.currentDocId());
  refreshQueue();
}

async function onDecision(decision: Decision): Promise<void> {
  if (!cardDocId) return;
  const note = (document.getElementById('decision-note') as HTMLInputElement | null)?.value ?? '';
  await store.decide(cardDocId, decision, note);
  refreshBanner();
  await store.load();          // reconcile everything from the server
  await refreshAll();
}

function wireEvents(): void {
  document.body.addEventListener('click', (event) => {
    const target = event.target as HTMLElement;
    if (target.id === 'retry-decision') {
      void store.retryPending().then(() => refreshAll());
      return;
    }
    if (target.id === 'apply-weights') {
      const weights: Record<string, number> = {};
      document.querySelectorAll<HTMLInputElement>('#weights input[data-keyword]')
        .forEach((input) => {
          weights[input.dataset.keyword ?? ''] = Number(input.value);
        });
      void store.editWeights(store.selectedRq, weights).then(async (ok) => {
        refreshWeights();
        if (ok) {
          refreshQueue();
          await refreshCard(store.currentDocId());
          refreshQueue();
        }
      });
      return;
    }
    const decision = target.dataset.decision as Decision | undefined;
    if (decision) {
      void onDecision(decision);
      return;
    }
    const doc = target.closest<HTMLElement>('[data-doc]')?.dataset.doc;
    if (doc) void refreshCard(doc).then(refreshQueue);
  });
  el('rq-select').addEventListener('change', (event) => {
    store.selectedRq = (event.target as HTMLSelectElement).value;
    refreshWeights();
    refreshQueue();
    void refreshCard(store.currentDocId()).then(refreshQueue);
  });
  el('channels').addEventListener('change', (event) => {
    store.selectedChannel = (event.target as HTMLInputElement).value;
    refreshGraph();
  });
}

async function boot(): Promise<void> {
  await store.load();
  wireEvents();
  await refreshAll();
}

void boot();
