import type { Expression, SpanRole } from './types';

/** Highlight convention: categories red, attributes blue, spatial relations
 * green. Applied as inline styles so the colors are inspectable in the DOM. */
export const ROLE_COLORS: Record<SpanRole, string> = {
  category: 'red',
  attribute: 'blue',
  relation: 'green',
};

/** Render an expression as role-colored spans; span text concatenated with
 * single spaces reconstructs the canonical string. */
export function renderExpression(container: HTMLElement, expr: Expression): void {
  container.textContent = '';
  const spans = [...expr.spans].sort((a, b) => a.start - b.start);
  spans.forEach((span, i) => {
    if (i > 0) container.appendChild(document.createTextNode(' '));
    const el = document.createElement('span');
    el.className = `hl-${span.role}`;
    el.style.color = ROLE_COLORS[span.role];
    el.textContent = expr.text.slice(span.start, span.end);
    container.appendChild(el);
  });
}

export interface ViewRefs {
  statsEl: HTMLElement;
  badgeEl: HTMLElement;
  viewerEl: HTMLElement;
  imageEl: HTMLImageElement;
  placeholderEl: HTMLElement;
  retryBtn: HTMLButtonElement;
  overlayToggle: HTMLInputElement;
  alphaSlider: HTMLInputElement;
  expressionEl: HTMLElement;
  metaEl: HTMLElement;
  keepBtn: HTMLButtonElement;
  discardBtn: HTMLButtonElement;
  undoBtn: HTMLButtonElement;
  completionEl: HTMLElement;
  exportBtn: HTMLButtonElement;
  exportResultEl: HTMLElement;
}

/** Build the static page skeleton once and hand back element references. */
export function buildLayout(root: HTMLElement): ViewRefs {
  root.innerHTML = `
    <header class="topbar">
      <h1>triplet review</h1>
      <div id="stats" class="stats" data-testid="stats"></div>
      <div id="retry-badge" class="badge hidden" data-testid="retry-badge"></div>
    </header>
    <main id="review" class="review">
      <section class="viewer" id="viewer">
        <img id="overlay-image" alt="scene with mask overlay" />
        <div id="placeholder" class="placeholder hidden" data-testid="placeholder">
          overlay unavailable
          <button id="retry-overlay" type="button">retry</button>
        </div>
        <div class="viewer-controls">
          <label><input type="checkbox" id="overlay-on" checked /> overlay</label>
          <input type="range" id="alpha" min="0" max="1" step="0.05" value="0.5"
                 aria-label="overlay opacity" />
        </div>
      </section>
      <section class="details">
        <p id="expression" class="expression" data-testid="expression"></p>
        <p id="meta" class="meta" data-testid="meta"></p>
        <div class="actions">
          <button id="keep" type="button">keep <kbd>k</kbd></button>
          <button id="discard" type="button">discard <kbd>d</kbd></button>
          <button id="undo" type="button">undo <kbd>u</kbd></button>
        </div>
      </section>
    </main>
    <section id="completion" class="completion hidden" data-testid="completion">
      <p>all triplets reviewed</p>
      <button id="export" type="button">export curated manifest</button>
      <p id="export-result" data-testid="export-result"></p>
    </section>
  `;
  const get = <T extends HTMLElement>(id: string): T => {
    const el = root.querySelector<T>(`#${id}`);
    if (el === null) throw new Error(`layout is missing #${id}`);
    return el;
  };
  return {
    statsEl: get('stats'),
    badgeEl: get('retry-badge'),
    viewerEl: get('viewer'),
    imageEl: get<HTMLImageElement>('overlay-image'),
    placeholderEl: get('placeholder'),
    retryBtn: get<HTMLButtonElement>('retry-overlay'),
    overlayToggle: get<HTMLInputElement>('overlay-on'),
    alphaSlider: get<HTMLInputElement>('alpha'),
    expressionEl: get('expression'),
    metaEl: get('meta'),
    keepBtn: get<HTMLButtonElement>('keep'),
    discardBtn: get<HTMLButtonElement>('discard'),
    undoBtn: get<HTMLButtonElement>('undo'),
    completionEl: get('completion'),
    exportBtn: get<HTMLButtonElement>('export'),
    exportResultEl: get('export-result'),
  };
}
