/** Render request scheduling: rate limiting plus newest-wins sequencing.
 *
 * Requirements this encodes:
 *  - at most one request in flight;
 *  - consecutive requests at least `intervalMs` apart (a rapid slider drag
 *    collapses into a few requests, each carrying the newest params);
 *  - every response carries the sequence number of its request, and a
 *    response is applied only if no later response has been applied, so
 *    the displayed composite never goes backwards.
 */

export interface Clock {
  now(): number;
  setTimeout(fn: () => void, ms: number): unknown;
  clearTimeout(handle: unknown): void;
}

export const realClock: Clock = {
  now: () => Date.now(),
  setTimeout: (fn, ms) => setTimeout(fn, ms),
  clearTimeout: (h) => clearTimeout(h as Parameters<typeof clearTimeout>[0]),
};

export class RenderScheduler<P, R> {
  private pending: P | null = null;
  private timer: unknown = null;
  private inFlight = false;
  private lastIssueAt = -Infinity;
  private nextSeq = 0;
  private appliedSeq = -1;
  requestCount = 0;

  constructor(
    private readonly send: (params: P) => Promise<R>,
    private readonly apply: (result: R, params: P) => void,
    private readonly onError: (err: unknown) => void = () => {},
    private readonly intervalMs = 150,
    private readonly clock: Clock = realClock,
  ) {}

  /** Called on every parameter change; coalesces into rate-limited sends. */
  request(params: P): void {
    this.pending = params;
    this.schedule();
  }

  private schedule(): void {
    if (this.pending === null || this.inFlight || this.timer !== null) return;
    const wait = this.lastIssueAt + this.intervalMs - this.clock.now();
    if (wait <= 0) {
      this.issue();
    } else {
      this.timer = this.clock.setTimeout(() => {
        this.timer = null;
        this.schedule();
      }, wait);
    }
  }

  private issue(): void {
    const params = this.pending as P;
    this.pending = null;
    const seq = this.nextSeq++;
    this.inFlight = true;
    this.lastIssueAt = this.clock.now();
    this.requestCount++;
    this.send(params).then(
      (result) => {
        this.inFlight = false;
        if (seq > this.appliedSeq) {
          this.appliedSeq = seq;
          this.apply(result, params);
        }
        this.schedule(); // trailing request for params that arrived meanwhile
      },
      (err) => {
        this.inFlight = false;
        this.onError(err);
        this.schedule();
      },
    );
  }

  dispose(): void {
    if (this.timer !== null) {
      this.clock.clearTimeout(this.timer);
      this.timer = null;
    }
    this.pending = null;
  }
}
