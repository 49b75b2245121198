import { describe, expect, it } from 'vitest';

import { ApiError, NetworkError, SessionApi, StepInFlightError } from '../src/api';

function jsonResponse(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

describe('session api client', () => {
  it('submits steps and parses records', async () => {
    const api = new SessionApi('http://api', async (url, init) => {
      expect(url).toBe('http://api/v1/sessions/s1/steps');
      expect(JSON.parse(String(init?.body))).toEqual({ instruction: 'Make it round.' });
      return jsonResponse({ index: 1, status: 'ok', candidates: { ours: {} } });
    });
    const record = await api.submitStep('s1', 'Make it round.');
    expect(record.index).toBe(1);
  });

  it('allows only one in-flight step per session', async () => {
    let release: (() => void) | undefined;
    const gate = new Promise<void>((resolve) => {
      release = resolve;
    });
    const api = new SessionApi('http://api', async () => {
      await gate;
      return jsonResponse({ index: 1, status: 'ok' });
    });
    const first = api.submitStep('s1', 'step one');
    expect(api.stepPending('s1')).toBe(true);
    await expect(api.submitStep('s1', 'step two')).rejects.toBeInstanceOf(StepInFlightError);
    release?.();
    await first;
    expect(api.stepPending('s1')).toBe(false);
    // after settling, the next step may proceed
    const again = new SessionApi('http://api', async () => jsonResponse({ index: 2, status: 'ok' }));
    await expect(again.submitStep('s1', 'step two')).resolves.toMatchObject({ index: 2 });
  });

  it('maps error bodies onto ApiError', async () => {
    const api = new SessionApi('http://api', async () =>
      jsonResponse({ code: 'session_complete', message: 'ran all steps' }, 409),
    );
    const err = await api.submitStep('s1', 'one more').catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).code).toBe('session_complete');
    expect((err as ApiError).status).toBe(409);
  });

  it('wraps transport failures as retryable NetworkError', async () => {
    const api = new SessionApi('http://api', async () => {
      throw new TypeError('fetch failed');
    });
    const err = await api.submitStep('s1', 'anything').catch((e: unknown) => e);
    expect(err).toBeInstanceOf(NetworkError);
    expect((err as NetworkError).retryable).toBe(true);
  });

  it('posts partial rankings against a two-candidate step', async () => {
    const calls: Array<{ url: string; body: unknown }> = [];
    const api = new SessionApi('http://api', async (url, init) => {
      calls.push({ url, body: JSON.parse(String(init?.body)) });
      return jsonResponse({ ok: true, step: 3 });
    });
    const ack = await api.submitRanking('s1', 3, { ours: 1 }, 2, true);
    expect(ack.ok).toBe(true);
    expect(calls[0]?.url).toBe('http://api/v1/sessions/s1/steps/3/ranking');
    expect(calls[0]?.body).toEqual({ ranks: { ours: 1 }, k: 2, partial: true });
  });
});
