import type { TripletRecord, Verdict, VerdictEvent } from './types';

export const UNDO_LIMIT = 20;

export interface UndoEntry {
  id: string;
  prior: Verdict;
}

/** Local review-queue state: an ordered record list, an optimistic verdict
 * map, a cursor over the still-pending items, and a bounded undo stack.
 * Pure bookkeeping - every transition returns the verdict event that must be
 * posted to the server, so transport concerns stay outside. */
export class ReviewQueue {
  private records: TripletRecord[] = [];
  private verdicts = new Map<string, Verdict>();
  private undoStack: UndoEntry[] = [];
  splitFilter: string | null = null;
  cursor = 0;

  load(records: TripletRecord[]): void {
    this.records = [...records].sort((a, b) => a.id.localeCompare(b.id));
    this.verdicts = new Map(this.records.map((r) => [r.id, r.verdict]));
    this.undoStack = [];
    this.cursor = 0;
  }

  effective(id: string): Verdict {
    return this.verdicts.get(id) ?? 'pending';
  }

  visible(): TripletRecord[] {
    return this.splitFilter === null
      ? this.records
      : this.records.filter((r) => r.split === this.splitFilter);
  }

  pendingQueue(): TripletRecord[] {
    return this.visible().filter((r) => this.effective(r.id) === 'pending');
  }

  current(): TripletRecord | null {
    const queue = this.pendingQueue();
    if (queue.length === 0) return null;
    this.cursor = Math.min(this.cursor, queue.length - 1);
    return queue[this.cursor] ?? null;
  }

  counts(): { pending: number; keep: number; discard: number; total: number } {
    const out = { pending: 0, keep: 0, discard: 0, total: 0 };
    for (const r of this.visible()) {
      out[this.effective(r.id)] += 1;
      out.total += 1;
    }
    return out;
  }

  isDone(): boolean {
    return this.pendingQueue().length === 0;
  }

  undoDepth(): number {
    return this.undoStack.length;
  }

  /** Verdict on the focused triplet; advances optimistically (the item leaves
   * the pending queue, so the next one slides under the cursor). */
  applyVerdict(verdict: 'keep' | 'discard'): VerdictEvent | null {
    const cur = this.current();
    if (cur === null) return null;
    this.undoStack.push({ id: cur.id, prior: this.effective(cur.id) });
    if (this.undoStack.length > UNDO_LIMIT) this.undoStack.shift();
    this.verdicts.set(cur.id, verdict);
    return { id: cur.id, verdict };
  }

  /** Revert the most recent verdict; re-focuses the restored triplet and
   * returns the event that re-posts its prior state. */
  undo(): VerdictEvent | null {
    const entry = this.undoStack.pop();
    if (entry === undefined) return null;
    this.verdicts.set(entry.id, entry.prior);
    if (entry.prior === 'pending') {
      const index = this.pendingQueue().findIndex((r) => r.id === entry.id);
      if (index >= 0) this.cursor = index;
    }
    return { id: entry.id, verdict: entry.prior };
  }
}
