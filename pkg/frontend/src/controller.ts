/** Session flow for one rater: list sessions, fetch pairs, submit choices.
 *
 * All rating state lives on the server; the controller only tracks the
 * pair currently on screen, so a reload can never duplicate or lose an
 * accepted rating. Submissions are guarded against double fire (rapid
 * keypresses) and queued for retry when the network fails.
 */

import {
  ApiError,
  Choice,
  isComplete,
  PairView,
  RatingApi,
  RatingBody,
  SessionView,
} from './api.js';

export type Phase = 'sessions' | 'rating' | 'complete' | 'error';

export interface ControllerState {
  phase: Phase;
  sessions: SessionView[];
  sessionId: string | null;
  rater: string | null;
  pair: PairView | null;
  nRated: number;
  nPairs: number;
  pendingCount: number;
  errorMessage: string | null;
}

export type RateOutcome = 'accepted' | 'queued' | 'duplicate' | 'ignored';

type Listener = (state: ControllerState) => void;
type Clock = () => number;

export class RaterController {
  private state: ControllerState = {
    phase: 'sessions',
    sessions: [],
    sessionId: null,
    rater: null,
    pair: null,
    nRated: 0,
    nPairs: 0,
    pendingCount: 0,
    errorMessage: null,
  };

  private listeners: Listener[] = [];
  private submitting = false;
  private pairShownAt = 0;
  private pendingQueue: RatingBody[] = [];

  constructor(
    private readonly api: RatingApi,
    private readonly now: Clock = () => Date.now(),
  ) {}

  getState(): ControllerState {
    return { ...this.state };
  }

  subscribe(fn: Listener): void {
    this.listeners.push(fn);
  }

  private update(patch: Partial<ControllerState>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn(this.getState());
  }

  async loadSessions(): Promise<void> {
    try {
      const sessions = await this.api.listSessions();
      this.update({ phase: 'sessions', sessions, errorMessage: null });
    } catch (err) {
      this.update({ phase: 'error', errorMessage: describe(err) });
    }
  }

  async selectSession(sessionId: string, rater: string): Promise<void> {
    if (!rater.trim()) {
      this.update({ errorMessage: 'rater name must be non-empty' });
      return;
    }
    const session = this.state.sessions.find((s) => s.id === sessionId);
    this.update({
      sessionId,
      rater: rater.trim(),
      nPairs: session ? session.n_pairs : 0,
      nRated: session ? (session.n_rated_by[rater.trim()] ?? 0) : 0,
      errorMessage: null,
    });
    await this.advance();
  }

  /** Fetch the next unrated pair (or completion marker) from the server. */
  async advance(): Promise<void> {
    const { sessionId, rater } = this.state;
    if (!sessionId || !rater) return;
    try {
      const next = await this.api.nextPair(sessionId, rater);
      if (isComplete(next)) {
        this.update({ phase: 'complete', pair: null, nRated: next.n_rated });
      } else {
        this.pairShownAt = this.now();
        this.update({ phase: 'rating', pair: next, errorMessage: null });
      }
    } catch (err) {
      this.update({ phase: 'error', errorMessage: describe(err) });
    }
  }

  /** Server truth wins: refresh progress and the current pair. */
  async refresh(): Promise<void> {
    await this.advance();
  }

  /**
   * Submit a choice for the pair on screen. Returns 'ignored' when no pair
   * is shown or a submission is already in flight, so a rapid double
   * keypress produces exactly one record.
   */
  async rate(choice: Choice): Promise<RateOutcome> {
    const { sessionId, rater, pair } = this.state;
    if (!sessionId || !rater || !pair || this.submitting) return 'ignored';
    this.submitting = true;
    const body: RatingBody = {
      pair_id: pair.pair_id,
      rater,
      choice,
      elapsed_ms: Math.max(0, Math.round(this.now() - this.pairShownAt)),
    };
    try {
      await this.flushPending();
      await this.api.postRating(sessionId, body);
      this.update({ nRated: this.state.nRated + 1 });
      await this.advance();
      return 'accepted';
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // someone (or a replay) already rated this pair: skip forward
        await this.advance();
        return 'duplicate';
      }
      this.pendingQueue.push(body);
      this.update({
        pendingCount: this.pendingQueue.length,
        errorMessage: 'rating queued; will retry',
      });
      return 'queued';
    } finally {
      this.submitting = false;
    }
  }

  /** Retry queued ratings in order; stops at the first failure. */
  async flushPending(): Promise<void> {
    const { sessionId } = this.state;
    if (!sessionId) return;
    let body: RatingBody | undefined;
    while ((body = this.pendingQueue[0]) !== undefined) {
      try {
        await this.api.postRating(sessionId, body);
      } catch (err) {
        if (!(err instanceof ApiError && err.status === 409)) throw err;
      }
      this.pendingQueue.shift();
      this.update({ pendingCount: this.pendingQueue.length, errorMessage: null });
    }
  }

  async retryPending(): Promise<void> {
    try {
      await this.flushPending();
      await this.advance();
    } catch {
      this.update({ errorMessage: 'retry failed; ratings still queued' });
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  return 'server unreachable';
}
