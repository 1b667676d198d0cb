/** Stepping discipline: at most one in-flight request per session, run mode
 * issues single steps until the server reports no change, and a 409 (another
 * request in flight) retries after the current wait. */

import { ApiError, StepResponse } from "./api.js";

export type StepFn = (steps: number) => Promise<StepResponse>;

export interface RunLoopHooks {
  onUpdate: (r: StepResponse) => void;
  onHalt?: () => void;
  onError?: (e: unknown) => void;
  /** test seam; defaults to setTimeout */
  wait?: (ms: number) => Promise<void>;
}

const defaultWait = (ms: number) => new Promise<void>((res) => setTimeout(res, ms));

export class RunLoop {
  private inFlight: Promise<void> | null = null;
  private running = false;

  constructor(
    private stepFn: StepFn,
    private hooks: RunLoopHooks,
  ) {}

  get busy(): boolean {
    return this.inFlight !== null;
  }

  get isRunning(): boolean {
    return this.running;
  }

  /** Issue one step request of `n`; queued behind any in-flight request. */
  async step(n: number): Promise<void> {
    while (this.inFlight !== null) {
      await this.inFlight;
    }
    const task = (async () => {
      try {
        const resp = await this.stepFn(n);
        this.hooks.onUpdate(resp);
      } catch (e) {
        if (!(e instanceof ApiError && e.status === 409)) {
          this.hooks.onError?.(e);
        }
        throw e;
      }
    })();
    this.inFlight = task.then(
      () => undefined,
      () => undefined,
    );
    try {
      await task;
    } catch (e) {
      if (e instanceof ApiError && e.status === 409) {
        // another writer beat us; retry once the server frees up
        await (this.hooks.wait ?? defaultWait)(25);
        this.inFlight = null;
        return this.step(n);
      }
      throw e;
    } finally {
      this.inFlight = null;
    }
  }

  /** Run mode: one single-step request per interval until changed=false. */
  async run(intervalMs: number): Promise<void> {
    if (this.running) return;
    this.running = true;
    const wait = this.hooks.wait ?? defaultWait;
    try {
      while (this.running) {
        let halted = false;
        await this.stepOnceForRun(() => {
          halted = true;
        });
        if (halted) {
          this.running = false;
          this.hooks.onHalt?.();
          return;
        }
        await wait(intervalMs);
      }
    } finally {
      this.running = false;
    }
  }

  private async stepOnceForRun(markHalted: () => void): Promise<void> {
    try {
      while (this.inFlight !== null) {
        await this.inFlight;
      }
      const task = this.stepFn(1);
      this.inFlight = task.then(
        () => undefined,
        () => undefined,
      );
      const resp = await task;
      this.hooks.onUpdate(resp);
      if (!resp.changed) markHalted();
    } catch (e) {
      if (e instanceof ApiError && e.status === 409) {
        return; // retry on the next tick, after the in-flight request resolves
      }
      this.running = false;
      this.hooks.onError?.(e);
      throw e;
    } finally {
      this.inFlight = null;
    }
  }

  pause(): void {
    this.running = false;
  }
}
