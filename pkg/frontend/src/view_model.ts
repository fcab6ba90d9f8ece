/**
 * Review session state machine.
 *
 * All review state lives in the service; this model holds one leased item,
 * the editor buffer, and queue counters. Two invariants are enforced here
 * rather than in the DOM layer: a decision can only be posted while a live
 * lease is held, and an edit needs a non-empty editor text that actually
 * differs from the candidate. The in-progress editor buffer is kept in
 * (session) storage so an accidental refresh does not lose work.
 */

import {
  ApiError,
  Decision,
  LeaseDto,
  ReviewApi,
  ReviewItemDto,
  StatsDto,
} from './api.js';

export type Phase = 'idle' | 'loading' | 'reviewing' | 'submitting' | 'done' | 'error';

export interface ViewState {
  phase: Phase;
  item: ReviewItemDto | null;
  lease: LeaseDto | null;
  editorText: string;
  note: string;
  counters: StatsDto | null;
  message: string | null;
}

export interface BufferStorage {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export class LeaseGuardError extends Error {}

const BUFFER_PREFIX = 'review-editor:';

export class ReviewSession {
  private state: ViewState = {
    phase: 'idle',
    item: null,
    lease: null,
    editorText: '',
    note: '',
    counters: null,
    message: null,
  };

  private listeners = new Set<(state: ViewState) => void>();

  constructor(
    private readonly api: ReviewApi,
    private readonly reviewer: string,
    private readonly storage?: BufferStorage,
    private readonly now: () => number = () => Date.now() / 1000,
  ) {}

  getState(): ViewState {
    return this.state;
  }

  subscribe(listener: (state: ViewState) => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private setState(patch: Partial<ViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  hasLiveLease(): boolean {
    const { lease } = this.state;
    return lease !== null && lease.expires_at > this.now();
  }

  canSubmit(decision: Decision): boolean {
    if (this.state.phase !== 'reviewing' || !this.hasLiveLease() || !this.state.item) {
      return false;
    }
    if (decision === 'edit') {
      const text = this.state.editorText;
      return text.trim().length > 0 && text !== this.state.item.candidate_text;
    }
    return true;
  }

  setEditorText(text: string): void {
    this.setState({ editorText: text });
    const item = this.state.item;
    if (item && this.storage) {
      this.storage.setItem(BUFFER_PREFIX + item.item_id, text);
    }
  }

  setNote(note: string): void {
    this.setState({ note });
  }

  async refreshCounters(): Promise<void> {
    this.setState({ counters: await this.api.stats() });
  }

  async loadNext(): Promise<void> {
    this.setState({ phase: 'loading', message: null });
    try {
      const [next, counters] = await Promise.all([
        this.api.nextItem(this.reviewer),
        this.api.stats(),
      ]);
      if (next.item === null || next.lease === null) {
        this.setState({
          phase: 'done',
          item: null,
          lease: null,
          editorText: '',
          counters,
        });
        return;
      }
      const buffered = this.storage?.getItem(BUFFER_PREFIX + next.item.item_id);
      this.setState({
        phase: 'reviewing',
        item: next.item,
        lease: next.lease,
        editorText: buffered ?? next.item.candidate_text,
        note: '',
        counters,
      });
    } catch (error) {
      this.setState({ phase: 'error', message: describe(error) });
    }
  }

  /**
   * Post a decision under the current lease, then advance to the next item.
   *
   * Counters are updated optimistically and reconciled with the service
   * stats that arrive with the next load.
   */
  async submit(decision: Decision): Promise<void> {
    const { item, counters } = this.state;
    if (!item || !this.hasLiveLease()) {
      throw new LeaseGuardError('no live lease; refusing to post a decision');
    }
    if (!this.canSubmit(decision)) {
      throw new LeaseGuardError(`decision ${decision} is not submittable now`);
    }
    this.setState({ phase: 'submitting' });
    const body = {
      decision,
      reviewer: this.reviewer,
      ...(decision === 'edit' ? { edited_text: this.state.editorText } : {}),
      ...(this.state.note ? { note: this.state.note } : {}),
    };
    try {
      await this.api.submitDecision(item.item_id, body);
    } catch (error) {
      if (error instanceof ApiError) {
        // service rejection: keep the item editable, surface the reason
        this.setState({ phase: 'reviewing', message: error.message });
        return;
      }
      this.setState({ phase: 'error', message: describe(error) });
      return;
    }
    this.storage?.removeItem(BUFFER_PREFIX + item.item_id);
    if (counters) {
      const status = decision === 'accept' ? 'accepted' : decision === 'edit' ? 'edited' : 'rejected';
      this.setState({
        counters: {
          ...counters,
          pending: counters.pending - 1,
          [status]: counters[status] + 1,
        },
      });
    }
    await this.loadNext();
  }
}

function describe(error: unknown): string {
  return error instanceof Error ? error.message : String(error);
}
