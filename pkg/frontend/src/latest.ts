/**
 * Request pacing for live-updating controls.
 *
 * `throttleLatest` spaces calls at least `intervalMs` apart while always
 * delivering the newest arguments (leading call immediate, trailing call
 * carries whatever arrived last). `LatestGate` numbers requests so a slow
 * response from a superseded request can be recognized and dropped.
 */

export function throttleLatest<A extends unknown[]>(
  intervalMs: number,
  fn: (...args: A) => void,
): (...args: A) => void {
  let lastFire = -Infinity;
  let timer: ReturnType<typeof setTimeout> | null = null;
  let pending: A | null = null;

  const fire = (args: A) => {
    lastFire = Date.now();
    fn(...args);
  };

  return (...args: A) => {
    const wait = lastFire + intervalMs - Date.now();
    if (wait <= 0 && timer === null) {
      fire(args);
      return;
    }
    pending = args;
    if (timer === null) {
      timer = setTimeout(() => {
        timer = null;
        const queued = pending;
        pending = null;
        if (queued !== null) fire(queued);
      }, Math.max(wait, 0));
    }
  };
}

/** Monotone ticket counter; only the most recently issued ticket is current. */
export class LatestGate {
  private seq = 0;

  issue(): number {
    this.seq += 1;
    return this.seq;
  }

  isCurrent(ticket: number): boolean {
    return ticket === this.seq;
  }
}
