import type { Expression, TripletRecord, Verdict, VerdictEvent } from '../src/types';

export function expr(
  category: string,
  attribute: string | null = null,
  relation: string | null = null,
): Expression {
  const parts = [attribute, category, relation].filter((p): p is string => p !== null);
  const text = parts.join(' ');
  const spans = [];
  let pos = 0;
  if (attribute !== null) {
    spans.push({ role: 'attribute' as const, start: pos, end: pos + attribute.length });
    pos += attribute.length + 1;
  }
  spans.push({ role: 'category' as const, start: pos, end: pos + category.length });
  pos += category.length + 1;
  if (relation !== null) {
    spans.push({ role: 'relation' as const, start: pos, end: pos + relation.length });
  }
  return { category, attribute, relation, text, spans };
}

export function record(
  id: string,
  options: { split?: string; verdict?: Verdict; expression?: Expression } = {},
): TripletRecord {
  return {
    id,
    scene_id: id.split('__')[0] ?? id,
    image_path: `images/${id}.png`,
    label_path: `labels/${id}.png`,
    mask_path: `masks/${id}.png`,
    expression: options.expression ?? expr('car'),
    split: options.split ?? 'train',
    foreground_ratio: 0.1,
    verdict: options.verdict ?? 'pending',
  };
}

/** In-memory stand-in for the review server, mounted as a fetch handler. */
export function fakeServer(records: TripletRecord[]) {
  const verdicts = new Map<string, Verdict>();
  const posted: VerdictEvent[] = [];
  let failuresLeft = 0;

  const effective = (id: string): Verdict => verdicts.get(id) ?? 'pending';

  const handler = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = new URL(String(input), 'http://fake.local');
    if (url.pathname === '/api/triplets') {
      const page = Number(url.searchParams.get('page') ?? '1');
      const pageSize = Number(url.searchParams.get('page_size') ?? '100');
      const status = url.searchParams.get('status');
      const split = url.searchParams.get('split');
      let rows = [...records].sort((a, b) => a.id.localeCompare(b.id));
      if (split !== null) rows = rows.filter((r) => r.split === split);
      if (status !== null) rows = rows.filter((r) => effective(r.id) === status);
      const chunk = rows
        .slice((page - 1) * pageSize, page * pageSize)
        .map((r) => ({ ...r, verdict: effective(r.id) }));
      return Response.json({
        page,
        page_size: pageSize,
        total: rows.length,
        pages: Math.max(1, Math.ceil(rows.length / pageSize)),
        records: chunk,
      });
    }
    if (url.pathname === '/api/verdicts' && init?.method === 'POST') {
      if (failuresLeft > 0) {
        failuresLeft -= 1;
        throw new TypeError('network unreachable');
      }
      const body = JSON.parse(String(init.body)) as VerdictEvent;
      posted.push(body);
      if (body.verdict === 'pending') verdicts.delete(body.id);
      else verdicts.set(body.id, body.verdict);
      return new Response(null, { status: 204 });
    }
    if (url.pathname === '/api/stats') {
      const counts = { pending: 0, keep: 0, discard: 0 };
      for (const r of records) counts[effective(r.id)] += 1;
      return Response.json({ ...counts, total: records.length, splits: {} });
    }
    if (url.pathname === '/api/export' && init?.method === 'POST') {
      const body = JSON.parse(String(init.body)) as { include_pending: boolean };
      const kept = records.filter((r) => {
        const v = effective(r.id);
        return v !== 'discard' && (body.include_pending || v !== 'pending');
      });
      return Response.json({ path: '/tmp/manifest.curated.jsonl', records: kept.length });
    }
    throw new Error(`fake server: unhandled ${init?.method ?? 'GET'} ${url.pathname}`);
  };

  return {
    handler,
    posted,
    verdicts,
    failNextPosts(n: number) {
      failuresLeft = n;
    },
  };
}
