import { ApiClient } from './api';
import { ReviewQueue } from './state';
import { buildLayout, renderExpression, type ViewRefs } from './view';
import type { Stats, VerdictEvent } from './types';

/** Controller: wires the queue state to the DOM and the HTTP API.
 *
 * Verdict posts flow through a FIFO so the server sees events in action
 * order even when some posts fail and are retried; a badge shows how many
 * events still wait. Keyboard shortcuts and buttons share the same handlers,
 * so both paths emit identical verdict events. */
export class ReviewApp {
  readonly queue = new ReviewQueue();
  readonly postQueue: VerdictEvent[] = [];
  refs: ViewRefs;
  alpha = 0.5;
  overlayOn = true;
  private flushing = false;
  private retryBust = 0;
  private readonly onKeydown = (e: KeyboardEvent) => this.handleKey(e);

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly retryDelayMs = 2000,
  ) {
    this.refs = buildLayout(root);
    this.refs.keepBtn.addEventListener('click', () => this.verdict('keep'));
    this.refs.discardBtn.addEventListener('click', () => this.verdict('discard'));
    this.refs.undoBtn.addEventListener('click', () => this.undo());
    this.refs.exportBtn.addEventListener('click', () => void this.exportCurated());
    this.refs.overlayToggle.addEventListener('change', () => {
      this.overlayOn = this.refs.overlayToggle.checked;
      this.renderImage();
    });
    this.refs.alphaSlider.addEventListener('input', () => {
      this.alpha = Number(this.refs.alphaSlider.value);
      this.renderImage();
    });
    this.refs.retryBtn.addEventListener('click', () => {
      this.retryBust += 1;
      this.renderImage();
    });
    this.refs.imageEl.addEventListener('error', () => {
      this.refs.placeholderEl.classList.remove('hidden');
      this.refs.imageEl.classList.add('hidden');
    });
    this.refs.imageEl.addEventListener('load', () => {
      this.refs.placeholderEl.classList.add('hidden');
      this.refs.imageEl.classList.remove('hidden');
    });
    document.addEventListener('keydown', this.onKeydown);
  }

  async init(splitFilter: string | null = null): Promise<void> {
    this.queue.splitFilter = splitFilter;
    this.queue.load(await this.api.fetchAll());
    await this.refreshStats();
    this.render();
  }

  dispose(): void {
    document.removeEventListener('keydown', this.onKeydown);
  }

  handleKey(e: KeyboardEvent): void {
    if (e.key === 'k') this.verdict('keep');
    else if (e.key === 'd') this.verdict('discard');
    else if (e.key === 'u') this.undo();
  }

  verdict(value: 'keep' | 'discard'): void {
    const event = this.queue.applyVerdict(value);
    if (event === null) return;
    this.enqueue(event);
    this.render();
  }

  undo(): void {
    const event = this.queue.undo();
    if (event === null) return;
    this.enqueue(event);
    this.render();
  }

  /** Append to the post FIFO and kick the flusher. */
  private enqueue(event: VerdictEvent): void {
    this.postQueue.push(event);
    this.renderBadge();
    void this.flush();
  }

  /** Drain the FIFO head-first; on failure keep order and retry later. */
  async flush(): Promise<void> {
    if (this.flushing) return;
    this.flushing = true;
    try {
      while (this.postQueue.length > 0) {
        const head = this.postQueue[0];
        if (head === undefined) break;
        try {
          await this.api.postVerdict(head);
          this.postQueue.shift();
          this.renderBadge();
        } catch {
          this.renderBadge();
          setTimeout(() => void this.flush(), this.retryDelayMs);
          return;
        }
      }
      await this.refreshStats();
    } finally {
      this.flushing = false;
    }
  }

  /** True once every posted event has been accepted by the server. */
  get settled(): boolean {
    return this.postQueue.length === 0 && !this.flushing;
  }

  async exportCurated(): Promise<void> {
    const result = await this.api.exportManifest(false);
    this.refs.exportResultEl.textContent = `${result.records} records -> ${result.path}`;
  }

  private async refreshStats(): Promise<void> {
    try {
      this.renderStats(await this.api.stats());
    } catch {
      // dashboard keeps the last known numbers while offline
    }
  }

  private renderStats(stats: Stats): void {
    const parts = [`pending ${stats.pending}`, `keep ${stats.keep}`, `discard ${stats.discard}`];
    for (const [split, s] of Object.entries(stats.splits)) {
      parts.push(`${split} ${s.total}`);
    }
    this.refs.statsEl.textContent = parts.join(' | ');
  }

  private renderBadge(): void {
    const waiting = this.postQueue.length;
    this.refs.badgeEl.textContent = waiting > 0 ? `${waiting} unsaved` : '';
    this.refs.badgeEl.classList.toggle('hidden', waiting === 0);
  }

  private renderImage(): void {
    const cur = this.queue.current();
    if (cur === null) return;
    const alpha = this.overlayOn ? this.alpha : 0;
    this.refs.imageEl.src = this.api.overlayUrl(cur.id, alpha, this.retryBust);
  }

  render(): void {
    const cur = this.queue.current();
    if (cur === null) {
      this.refs.completionEl.classList.remove('hidden');
      this.root.querySelector('#review')?.classList.add('hidden');
      return;
    }
    this.refs.completionEl.classList.add('hidden');
    this.root.querySelector('#review')?.classList.remove('hidden');
    renderExpression(this.refs.expressionEl, cur.expression);
    const counts = this.queue.counts();
    this.refs.metaEl.textContent =
      `${cur.id} | scene ${cur.scene_id} | split ${cur.split} | ` +
      `${counts.pending} of ${counts.total} pending | undo depth ${this.queue.undoDepth()}`;
    this.renderImage();
  }
}
