/** Trailing-edge debounce with latest-wins single-flight execution.
 *
 * At most one runner invocation is in flight; requests arriving while
 * one runs (or while the delay timer is pending) collapse to the most
 * recent argument. With the default 250 ms delay a continuous stream
 * of requests executes at most 4 times per second.
 */

export interface Timers {
  setTimeout(fn: () => void, ms: number): unknown;
  clearTimeout(handle: unknown): void;
}

const realTimers: Timers = {
  setTimeout: (fn, ms) => setTimeout(fn, ms),
  clearTimeout: (handle) => clearTimeout(handle as number),
};

export class LatestWins<T> {
  private timer: unknown = null;
  private running = false;
  private pending: { arg: T } | null = null;

  constructor(private readonly runner: (arg: T) => Promise<void>,
              private readonly delayMs = 250,
              private readonly timers: Timers = realTimers) {}

  /** Schedule a run with `arg`; newer arguments replace older ones. */
  request(arg: T): void {
    this.pending = { arg };
    if (this.timer === null && !this.running) {
      this.timer = this.timers.setTimeout(() => this.fire(), this.delayMs);
    }
  }

  get inFlight(): boolean {
    return this.running;
  }

  private fire(): void {
    this.timer = null;
    if (this.pending === null || this.running) return;
    const { arg } = this.pending;
    this.pending = null;
    this.running = true;
    this.runner(arg).finally(() => {
      this.running = false;
      if (this.pending !== null) {
        this.timer = this.timers.setTimeout(() => this.fire(), this.delayMs);
      }
    });
  }
}
