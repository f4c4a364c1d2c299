import { describe, expect, it } from 'vitest';

import { RatingApi } from '../src/api.js';
import { RaterController } from '../src/controller.js';
import { FakeServer, makePairs } from './fakeServer.js';

function setup(nItems = 5) {
  const server = new FakeServer('session', makePairs(nItems)); // C(5,2) = 10
  const api = new RatingApi('', server.fetch);
  let t = 1000;
  const controller = new RaterController(api, () => (t += 250));
  return { server, api, controller };
}

describe('session selection', () => {
  it('lists sessions and starts with zero rated', async () => {
    const { server, controller } = setup();
    await controller.loadSessions();
    const state = controller.getState();
    expect(state.phase).toBe('sessions');
    expect(state.sessions).toEqual([
      { id: 'session', n_pairs: 10, n_rated_by: {} },
    ]);
    expect(server.records).toHaveLength(0);
  });

  it('rejects an empty rater name', async () => {
    const { controller } = setup();
    await controller.loadSessions();
    await controller.selectSession('session', '   ');
    expect(controller.getState().errorMessage).toMatch(/non-empty/);
    expect(controller.getState().pair).toBeNull();
  });

  it('shows a retry state when the server is unreachable, with no data loss', async () => {
    const { server, controller } = setup();
    server.offline = true;
    await controller.loadSessions();
    expect(controller.getState().phase).toBe('error');
    expect(controller.getState().errorMessage).toBe('server unreachable');
    server.offline = false;
    await controller.loadSessions();
    expect(controller.getState().phase).toBe('sessions');
  });
});

describe('rating flow', () => {
  it('completes a 10-pair session; the server JSONL holds exactly 10 records', async () => {
    const { server, controller } = setup(5);
    await controller.loadSessions();
    await controller.selectSession('session', 'alice');

    const choices = ['left', 'right', 'left', 'skip', 'right'] as const;
    let n = 0;
    while (controller.getState().phase === 'rating') {
      const outcome = await controller.rate(choices[n % choices.length]!);
      expect(outcome).toBe('accepted');
      n += 1;
      expect(n).toBeLessThanOrEqual(10);
    }

    expect(n).toBe(10);
    const state = controller.getState();
    expect(state.phase).toBe('complete');
    expect(state.nRated).toBe(10);

    const lines = server.jsonl().trim().split('\n');
    expect(lines).toHaveLength(10);
    const parsed = lines.map((l) => JSON.parse(l));
    for (const rec of parsed) {
      expect(Object.keys(rec).sort()).toEqual([
        'choice', 'elapsed_ms', 'left_item', 'pair_id', 'rater',
        'right_item', 'session_id', 'timestamp',
      ].sort());
      expect(rec.rater).toBe('alice');
      expect(['left', 'right', 'skip']).toContain(rec.choice);
      expect(rec.elapsed_ms).toBeGreaterThan(0);
    }
    expect(new Set(parsed.map((r) => r.pair_id)).size).toBe(10);
  });

  it('stores exactly one record on a rapid double keypress', async () => {
    const { server, controller } = setup();
    await controller.loadSessions();
    await controller.selectSession('session', 'bob');

    server.holdResponses();
    const first = controller.rate('left');
    const second = controller.rate('right'); // fired before the first resolves
    server.releaseResponses();
    const [a, b] = await Promise.all([first, second]);

    expect(a).toBe('accepted');
    expect(b).toBe('ignored');
    expect(server.records).toHaveLength(1);
    expect(server.records[0]!.choice).toBe('left');
  });

  it('skips forward when the pair was already rated elsewhere (409)', async () => {
    const { server, controller } = setup();
    await controller.loadSessions();
    await controller.selectSession('session', 'carol');
    const pairId = controller.getState().pair!.pair_id;

    // the same rater rated this pair from another tab
    server.records.push({
      session_id: 'session', pair_id: pairId, rater: 'carol', choice: 'right',
      left_item: 'x', right_item: 'y', elapsed_ms: 1, timestamp: '',
    });

    const outcome = await controller.rate('left');
    expect(outcome).toBe('duplicate');
    expect(server.records).toHaveLength(1); // no second record
    expect(controller.getState().pair!.pair_id).not.toBe(pairId);
  });

  it('queues ratings while offline and retries them without loss', async () => {
    const { server, controller } = setup();
    await controller.loadSessions();
    await controller.selectSession('session', 'dave');
    const pairId = controller.getState().pair!.pair_id;

    server.offline = true;
    const outcome = await controller.rate('left');
    expect(outcome).toBe('queued');
    expect(controller.getState().pendingCount).toBe(1);
    expect(server.records).toHaveLength(0);

    server.offline = false;
    await controller.retryPending();
    const state = controller.getState();
    expect(state.pendingCount).toBe(0);
    expect(server.records).toHaveLength(1);
    expect(server.records[0]!.pair_id).toBe(pairId);
    expect(state.pair!.pair_id).not.toBe(pairId); // advanced past it
  });

  it('records elapsed time from pair display to submission', async () => {
    const { server, controller } = setup();
    await controller.loadSessions();
    await controller.selectSession('session', 'erin');
    await controller.rate('right');
    expect(server.records[0]!.elapsed_ms).toBeGreaterThan(0);
  });
});

describe('progress and independence', () => {
  it('refresh reflects server truth, not client counts', async () => {
    const { server, controller } = setup();
    await controller.loadSessions();
    await controller.selectSession('session', 'alice');
    await controller.rate('left');
    await controller.rate('right');

    // a second controller (fresh page load) sees the same server state
    const api2 = new RatingApi('', server.fetch);
    const c2 = new RaterController(api2);
    await c2.loadSessions();
    expect(c2.getState().sessions[0]!.n_rated_by['alice']).toBe(2);
    await c2.selectSession('session', 'alice');
    expect(c2.getState().nRated).toBe(2);
    expect(c2.getState().pair!.pair_id).toBe(controller.getState().pair!.pair_id);
  });

  it('keeps progress independent across raters on the same session', async () => {
    const { server, controller } = setup();
    await controller.loadSessions();
    await controller.selectSession('session', 'alice');
    await controller.rate('left');

    const c2 = new RaterController(new RatingApi('', server.fetch));
    await c2.loadSessions();
    await c2.selectSession('session', 'frank');
    expect(c2.getState().nRated).toBe(0);
    // frank starts from the first pair even though alice rated it
    expect(c2.getState().pair!.pair_id).toBe(server.pairs[0]!.pair_id);
  });

  it('reload never duplicates an accepted rating', async () => {
    const { server, controller } = setup();
    await controller.loadSessions();
    await controller.selectSession('session', 'alice');
    await controller.rate('left');

    const reloaded = new RaterController(new RatingApi('', server.fetch));
    await reloaded.loadSessions();
    await reloaded.selectSession('session', 'alice');
    await reloaded.rate('right');
    expect(server.records).toHaveLength(2);
    const ids = server.records.map((r) => r.pair_id);
    expect(new Set(ids).size).toBe(2);
  });
});

describe('blinding', () => {
  it('network traffic carries only pair ids, hashes, counts and rater names', async () => {
    const { server, controller } = setup();
    await controller.loadSessions();
    await controller.selectSession('session', 'alice');
    while (controller.getState().phase === 'rating') {
      await controller.rate('left');
    }
    const traffic = server.requestLog.join('\n');
    for (const token of ['item-', 'median', 'unet', 'sigma', 'level', 'blur', 'method']) {
      expect(traffic).not.toContain(token);
    }
    // image URLs are content-hash addressed
    expect(controller.getState().pair).toBeNull();
  });

  it('pair payloads expose exactly two content-hash image URLs', async () => {
    const { controller } = setup();
    await controller.loadSessions();
    await controller.selectSession('session', 'alice');
    const pair = controller.getState().pair!;
    expect(Object.keys(pair).sort()).toEqual([
      'left_image_url', 'pair_id', 'right_image_url',
    ]);
    expect(pair.left_image_url).toMatch(/^\/images\/[0-9a-f]{32}\.png$/);
    expect(pair.right_image_url).toMatch(/^\/images\/[0-9a-f]{32}\.png$/);
  });
});
