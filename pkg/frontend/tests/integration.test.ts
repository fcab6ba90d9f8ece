// @vitest-environment jsdom
//
// Scripted browser session against the real review service: enqueue a
// 20-item fixture queue, mount the actual app DOM, and drive it with clicks
// and keystrokes to accept 10, edit 5, and reject 5. The service export must
// contain exactly the 15 surviving items with the 5 edits carrying their
// edited text, and every POST the UI makes must happen under a live lease.

import { spawn, spawnSync, type ChildProcess } from 'node:child_process';
import { mkdtempSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';
import katex from 'katex';

import { ReviewApi, type FetchLike } from '../src/api.js';
import { mountApp } from '../src/app.js';
import type { ReviewSession } from '../src/view_model.js';

const PYTHON = process.env.PYTHON ?? 'python3';
const PORT = 8700 + Math.floor(Math.random() * 800);
const BASE = `http://127.0.0.1:${PORT}`;
const ITEM_COUNT = 20;

let server: ChildProcess | null = null;

async function waitFor(
  condition: () => boolean | Promise<boolean>,
  what: string,
  timeoutMs = 30_000,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (await condition()) return;
    await new Promise((resolve) => setTimeout(resolve, 20));
  }
  throw new Error(`timed out waiting for ${what}`);
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), 'review-ui-'));
  const db = join(dir, 'queue.db');
  const fixture = join(dir, 'items.jsonl');
  const lines = Array.from({ length: ITEM_COUNT }, (_, i) =>
    JSON.stringify({
      item_id: `item-${String(i).padStart(2, '0')}`,
      kind: i % 2 ? 'translation' : 'ocr',
      source_ref: `original problem ${i}: compute $\\frac{${i}}{2}$`,
      candidate_text: `candidate ${i}: the value is $\\frac{${i}}{2}$.`,
    }),
  );
  writeFileSync(fixture, lines.join('\n') + '\n');
  const enqueue = spawnSync(
    PYTHON,
    ['-m', 'xlmath.cli', 'curate', 'enqueue', '--db', db, '--file', fixture],
    { encoding: 'utf-8' },
  );
  expect(enqueue.status, enqueue.stderr).toBe(0);

  server = spawn(
    PYTHON,
    ['-m', 'xlmath.cli', 'curate', 'serve', '--db', db, '--port', String(PORT)],
    { stdio: 'ignore' },
  );
  await waitFor(async () => {
    try {
      const response = await fetch(`${BASE}/api/stats`);
      return response.ok;
    } catch {
      return false;
    }
  }, 'service startup');
}, 60_000);

afterAll(async () => {
  if (server) {
    server.kill('SIGTERM');
    await new Promise((resolve) => server!.once('exit', resolve));
  }
});

describe('review ui against the live service', () => {
  it(
    'accepts 10, edits 5, rejects 5, and never posts without a lease',
    async () => {
      document.body.innerHTML = '<div id="app"></div>';
      const root = document.getElementById('app')!;

      let session: ReviewSession | null = null;
      let postCount = 0;
      let postsUnderLease = 0;
      const countingFetch: FetchLike = (url, init) => {
        if ((init?.method ?? 'GET') === 'POST') {
          postCount += 1;
          if (session?.hasLiveLease()) postsUnderLease += 1;
        }
        return fetch(url, init);
      };

      session = mountApp(root, {
        api: new ReviewApi(BASE, countingFetch),
        reviewer: 'integration-bot',
        katex,
        storage: window.sessionStorage,
      });

      const editor = root.querySelector<HTMLTextAreaElement>('#editor')!;
      const note = root.querySelector<HTMLInputElement>('#note')!;
      const buttons = {
        accept: root.querySelector<HTMLButtonElement>('#accept')!,
        edit: root.querySelector<HTMLButtonElement>('#edit')!,
        reject: root.querySelector<HTMLButtonElement>('#reject')!,
      };

      const decided = new Set<string>();
      const edits = new Map<string, string>();
      while (decided.size < ITEM_COUNT) {
        await waitFor(
          () => session!.getState().phase === 'reviewing',
          `item ${decided.size + 1} to load`,
        );
        const state = session.getState();
        const itemId = state.item!.item_id;
        expect(decided.has(itemId)).toBe(false);
        decided.add(itemId);
        const index = Number(itemId.slice('item-'.length));

        // the candidate panel shows rendered math while reviewing
        expect(root.querySelector('#candidate-panel .katex')).not.toBeNull();

        if (index < 10) {
          if (index % 3 === 0) {
            // exercise the keyboard path for a few accepts
            document.dispatchEvent(
              new window.KeyboardEvent('keydown', { key: 'a', bubbles: true }),
            );
          } else {
            expect(buttons.accept.disabled).toBe(false);
            buttons.accept.click();
          }
        } else if (index < 15) {
          expect(buttons.edit.disabled).toBe(true); // no delta yet
          const corrected = `corrected ${index}: the value is $\\frac{${index}}{2}$, verified.`;
          editor.value = corrected;
          editor.dispatchEvent(new window.Event('input', { bubbles: true }));
          edits.set(itemId, corrected);
          await waitFor(() => !buttons.edit.disabled, 'edit button to enable');
          buttons.edit.click();
        } else {
          note.value = 'mistranslation';
          note.dispatchEvent(new window.Event('input', { bubbles: true }));
          buttons.reject.click();
        }
        await waitFor(
          () =>
            session!.getState().phase !== 'reviewing' ||
            session!.getState().item?.item_id !== itemId,
          `decision on ${itemId} to land`,
        );
      }

      await waitFor(() => session!.getState().phase === 'done', 'queue to drain');
      expect(root.querySelector('#candidate-panel')!.textContent).toContain(
        'All items reviewed.',
      );
      const counters = session.getState().counters!;
      expect(counters).toMatchObject({
        pending: 0,
        accepted: 10,
        edited: 5,
        rejected: 5,
      });

      // every decision went over the wire exactly once, all under a lease
      expect(postCount).toBe(ITEM_COUNT);
      expect(postsUnderLease).toBe(ITEM_COUNT);

      // a post-drain submit attempt is refused locally: no further POSTs
      await expect(session.submit('accept')).rejects.toThrow();
      expect(postCount).toBe(ITEM_COUNT);

      const exported = (await new ReviewApi(BASE).exportReviewed()).items;
      expect(exported).toHaveLength(15);
      const byStatus = new Map<string, number>();
      for (const fragment of exported) {
        byStatus.set(fragment.status, (byStatus.get(fragment.status) ?? 0) + 1);
      }
      expect(byStatus.get('accepted')).toBe(10);
      expect(byStatus.get('edited')).toBe(5);
      for (const [itemId, text] of edits) {
        const fragment = exported.find((f) => f.item_id === itemId);
        expect(fragment?.status).toBe('edited');
        expect(fragment?.text).toBe(text);
      }
      const rejectedIds = new Set(
        Array.from({ length: 5 }, (_, i) => `item-${15 + i}`),
      );
      expect(exported.some((f) => rejectedIds.has(f.item_id))).toBe(false);
    },
    120_000,
  );
});
