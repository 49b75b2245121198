/**
 * Studio application: wires the session API, view state, viewport, and
 * program panes together. The page holds no truth of its own — every
 * render pass derives from server records, and a reload rebuilds the
 * identical view from /history.
 */

import { ApiError, NetworkError, SessionApi, StepInFlightError } from './api';
import { commandsForPart, parseModelingLines } from './provenance';
import { isPartial, orderToRanks, validateRanks, widgetVisible } from './ranking';
import { buildSceneGraph, setHighlight, type BuiltScene } from './scene';
import {
  applyStepResult,
  candidateMethods,
  displayedRecord,
  emptyView,
  viewFromHistory,
  type ViewState,
} from './state';
import type { StepRecord } from './types';
import { Viewer } from './viewer';

interface Elements {
  instruction: HTMLInputElement;
  submit: HTMLButtonElement;
  budget: HTMLElement;
  status: HTMLElement;
  error: HTMLElement;
  retry: HTMLButtonElement;
  dslPane: HTMLElement;
  modelingPane: HTMLElement;
  rankingPane: HTMLElement;
  viewport: HTMLElement;
  stepList: HTMLElement;
}

function grab(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing element #${id}`);
  }
  return el;
}

export class StudioApp {
  private view: ViewState;
  private built: BuiltScene | null = null;
  private lastInstruction = '';
  private readonly viewer: Viewer;

  constructor(
    private readonly api: SessionApi,
    private readonly els: Elements,
    initial: ViewState,
  ) {
    this.view = initial;
    this.viewer = new Viewer(els.viewport);
    els.submit.addEventListener('click', () => void this.submit());
    els.instruction.addEventListener('input', () => this.renderControls());
    els.instruction.addEventListener('keydown', (e) => {
      if (e.key === 'Enter') {
        void this.submit();
      }
    });
    els.retry.addEventListener('click', () => void this.submit(this.lastInstruction));
    this.render();
  }

  static async boot(api: SessionApi, els: Elements, sessionId: string | null): Promise<StudioApp> {
    if (sessionId) {
      const history = await api.history(sessionId);
      return new StudioApp(api, els, viewFromHistory(history));
    }
    const { domains } = await api.domains();
    const domain = domains[0];
    if (!domain) {
      throw new Error('no adapted domains available');
    }
    const created = await api.createSession(domain);
    const url = new URL(window.location.href);
    url.searchParams.set('session', created.session_id);
    window.history.replaceState(null, '', url.toString());
    return new StudioApp(api, els, emptyView({
      session_id: created.session_id,
      domain,
      max_steps: created.max_steps,
      status: 'ACTIVE',
      steps: 0,
    }));
  }

  private async submit(text?: string): Promise<void> {
    const instruction = (text ?? this.els.instruction.value).trim();
    if (!instruction || this.view.inputLocked || this.api.stepPending(this.view.sessionId)) {
      return;
    }
    this.lastInstruction = instruction;
    this.setBusy(true);
    this.showError(null, false);
    try {
      const record = await this.api.submitStep(this.view.sessionId, instruction);
      this.view = applyStepResult(this.view, record);
      if (record.status === 'ok') {
        this.els.instruction.value = '';
      } else if (record.error) {
        this.showError(`${record.error.code}: ${record.error.message}`, false);
      }
      this.render();
    } catch (err) {
      if (err instanceof NetworkError) {
        this.showError('network failure — the step was not recorded', true);
      } else if (err instanceof ApiError && err.code === 'session_complete') {
        this.view = { ...this.view, inputLocked: true };
        this.showError('session already complete', false);
        this.render();
      } else if (!(err instanceof StepInFlightError)) {
        this.showError(String(err), false);
      }
    } finally {
      this.setBusy(false);
    }
  }

  private async submitRanking(step: number, order: string[], k: number): Promise<void> {
    const ranks = orderToRanks(order);
    const problems = validateRanks(ranks, k);
    if (problems.length > 0) {
      this.showError(problems.join('; '), false);
      return;
    }
    try {
      await this.api.submitRanking(this.view.sessionId, step, ranks, k, isPartial(ranks, k));
      const history = await this.api.history(this.view.sessionId);
      this.view = viewFromHistory(history);
      this.render();
    } catch (err) {
      this.showError(String(err), false);
    }
  }

  private setBusy(busy: boolean): void {
    this.els.submit.disabled = busy || this.view.inputLocked || !this.els.instruction.value.trim();
    this.els.status.textContent = busy ? 'translating…' : '';
  }

  private showError(message: string | null, retryable: boolean): void {
    this.els.error.textContent = message ?? '';
    this.els.error.style.display = message ? 'block' : 'none';
    this.els.retry.style.display = retryable ? 'inline-block' : 'none';
  }

  private renderControls(): void {
    const empty = !this.els.instruction.value.trim();
    this.els.submit.disabled =
      empty || this.view.inputLocked || this.api.stepPending(this.view.sessionId);
    this.els.instruction.disabled = this.view.inputLocked;
    this.els.budget.textContent = `${this.view.budgetRemaining} of ${this.view.maxSteps} steps left`;
    if (this.view.inputLocked) {
      this.els.status.textContent = 'session complete';
    }
  }

  private render(): void {
    this.renderControls();
    const record = displayedRecord(this.view);
    this.built = record?.scene ? buildSceneGraph(record.scene) : null;
    this.viewer.show(this.built);
    if (this.built && this.built.warnings.length > 0) {
      this.showError(this.built.warnings.join('; '), false);
    }
    this.renderPanes(record);
    this.renderStepList();
    if (record) {
      this.renderRanking(record);
    } else {
      this.els.rankingPane.innerHTML = '';
    }
  }

  private renderPanes(record: StepRecord | null): void {
    this.els.dslPane.innerHTML = '';
    this.els.modelingPane.innerHTML = '';
    if (!record) {
      return;
    }
    const lines = parseModelingLines(record.modeling ?? '');
    const lineEls: HTMLElement[] = lines.map((line) => {
      const row = document.createElement('div');
      row.className = 'command';
      row.textContent = line.text;
      this.els.modelingPane.appendChild(row);
      return row;
    });
    const markCommands = (part: string | null) => {
      lines.forEach((line, i) => {
        const hit = part !== null && line.parts.includes(part);
        lineEls[i]?.classList.toggle('linked', hit);
      });
    };
    if (!record.delta) {
      return;
    }
    for (const construct of record.delta.constructs) {
      const li = document.createElement('div');
      li.className = 'construct';
      const label =
        construct.kind === 'part'
          ? `${construct.part}.${construct.subpart}.${construct.property} ${construct.operation}`
          : `${construct.endpoints?.join(' <-> ')} ${construct.operation}`;
      li.textContent = label;
      const part = construct.kind === 'part' ? construct.part : construct.endpoints?.[1];
      li.addEventListener('mouseenter', () => {
        if (this.built && part) {
          setHighlight(this.built, part);
        }
        markCommands(part ?? null);
      });
      li.addEventListener('mouseleave', () => {
        if (this.built) {
          setHighlight(this.built, null);
        }
        markCommands(null);
      });
      if (part && commandsForPart(lines, part).length === 0 && lines.length > 0) {
        li.classList.add('unrealized');
      }
      this.els.dslPane.appendChild(li);
    }
  }

  private renderStepList(): void {
    this.els.stepList.innerHTML = '';
    for (const step of this.view.steps) {
      const row = document.createElement('div');
      row.className = `step ${step.status}`;
      row.textContent = `${step.index}. ${step.instruction}`;
      this.els.stepList.appendChild(row);
    }
  }

  private renderRanking(record: StepRecord): void {
    const pane = this.els.rankingPane;
    pane.innerHTML = '';
    const methods = candidateMethods(record);
    if (!widgetVisible(methods)) {
      return; // single candidate: nothing to rank
    }
    const title = document.createElement('div');
    title.textContent = `rank step ${record.index} results (best first)`;
    pane.appendChild(title);
    const order: string[] = [];
    for (const method of methods) {
      const button = document.createElement('button');
      button.textContent = method;
      button.addEventListener('click', () => {
        if (!order.includes(method)) {
          order.push(method);
          button.disabled = true;
        }
      });
      pane.appendChild(button);
    }
    const send = document.createElement('button');
    send.textContent = 'submit ranking';
    send.addEventListener('click', () => {
      void this.submitRanking(record.index, order, methods.length);
    });
    pane.appendChild(send);
    if (record.ranking) {
      const stored = document.createElement('div');
      stored.textContent = `stored: ${JSON.stringify(record.ranking.ranks)}`;
      pane.appendChild(stored);
    }
  }
}

export function collectElements(): Elements {
  return {
    instruction: grab('instruction') as HTMLInputElement,
    submit: grab('submit') as HTMLButtonElement,
    budget: grab('budget'),
    status: grab('status'),
    error: grab('error'),
    retry: grab('retry') as HTMLButtonElement,
    dslPane: grab('dsl-pane'),
    modelingPane: grab('modeling-pane'),
    rankingPane: grab('ranking-pane'),
    viewport: grab('viewport'),
    stepList: grab('step-list'),
  };
}
