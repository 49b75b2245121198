/**
 * REST client for the session service.
 *
 * Step submission enforces the single-in-flight rule: while one step is
 * pending for a session, further submissions are rejected locally so the
 * server never sees concurrent writes from this client.
 */

import type { HistoryResponse, SceneJson, StepRecord } from './types';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

/** Transport-level failure: the request may be retried. */
export class NetworkError extends Error {
  readonly retryable = true;
}

export class StepInFlightError extends Error {
  constructor() {
    super('a step is already being processed for this session');
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class SessionApi {
  private inFlight = new Set<string>();

  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method,
        headers: body === undefined ? undefined : { 'Content-Type': 'application/json' },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new NetworkError(`request failed: ${String(err)}`);
    }
    if (!resp.ok) {
      let code = 'error';
      let message = `${resp.status}`;
      try {
        const payload = (await resp.json()) as { code?: string; message?: string };
        code = payload.code ?? code;
        message = payload.message ?? message;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, code, message);
    }
    return (await resp.json()) as T;
  }

  domains(): Promise<{ domains: string[] }> {
    return this.request('GET', '/v1/domains');
  }

  createSession(domain: string): Promise<{ session_id: string; max_steps: number }> {
    return this.request('POST', '/v1/sessions', { domain });
  }

  /** True while a step for this session is still pending. */
  stepPending(sessionId: string): boolean {
    return this.inFlight.has(sessionId);
  }

  async submitStep(sessionId: string, instruction: string): Promise<StepRecord> {
    if (this.inFlight.has(sessionId)) {
      throw new StepInFlightError();
    }
    this.inFlight.add(sessionId);
    try {
      return await this.request<StepRecord>(
        'POST',
        `/v1/sessions/${sessionId}/steps`,
        { instruction },
      );
    } finally {
      this.inFlight.delete(sessionId);
    }
  }

  submitRanking(
    sessionId: string,
    step: number,
    ranks: Record<string, number>,
    k?: number,
    partial = false,
  ): Promise<{ ok: boolean; step: number }> {
    return this.request('POST', `/v1/sessions/${sessionId}/steps/${step}/ranking`, {
      ranks,
      k: k ?? null,
      partial,
    });
  }

  history(sessionId: string): Promise<HistoryResponse> {
    return this.request('GET', `/v1/sessions/${sessionId}/history`);
  }

  scene(sessionId: string, step: number): Promise<SceneJson> {
    return this.request('GET', `/v1/sessions/${sessionId}/scene/${step}`);
  }
}
