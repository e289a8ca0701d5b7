import type { ExportResult, Stats, TripletPage, TripletRecord, VerdictEvent } from './types';

/** Thin typed client for the review-server HTTP API. All UI state changes go
 * through these endpoints and nothing else. */
export class ApiClient {
  constructor(private readonly base: string = '') {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(this.base + path);
    if (!resp.ok) throw new Error(`GET ${path} -> ${resp.status}`);
    return (await resp.json()) as T;
  }

  async fetchPage(params: {
    split?: string;
    status?: string;
    page?: number;
    pageSize?: number;
  }): Promise<TripletPage> {
    const query = new URLSearchParams();
    if (params.split) query.set('split', params.split);
    if (params.status) query.set('status', params.status);
    query.set('page', String(params.page ?? 1));
    query.set('page_size', String(params.pageSize ?? 100));
    return this.getJson<TripletPage>(`/api/triplets?${query}`);
  }

  /** Every record matching the filter, walking all pages. */
  async fetchAll(filter: { split?: string; status?: string } = {}): Promise<TripletRecord[]> {
    const records: TripletRecord[] = [];
    let page = 1;
    for (;;) {
      const chunk = await this.fetchPage({ ...filter, page, pageSize: 200 });
      records.push(...chunk.records);
      if (page >= chunk.pages) break;
      page += 1;
    }
    return records;
  }

  async postVerdict(event: VerdictEvent): Promise<void> {
    const resp = await fetch(this.base + '/api/verdicts', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(event),
    });
    if (!resp.ok) throw new Error(`POST /api/verdicts -> ${resp.status}`);
  }

  async stats(): Promise<Stats> {
    return this.getJson<Stats>('/api/stats');
  }

  async exportManifest(includePending: boolean): Promise<ExportResult> {
    const resp = await fetch(this.base + '/api/export', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ include_pending: includePending }),
    });
    if (!resp.ok) throw new Error(`POST /api/export -> ${resp.status}`);
    return (await resp.json()) as ExportResult;
  }

  overlayUrl(id: string, alpha: number, cacheBust = 0): string {
    const bust = cacheBust > 0 ? `&retry=${cacheBust}` : '';
    return `${this.base}/api/overlay/${encodeURIComponent(id)}?alpha=${alpha}${bust}`;
  }
}
