import { describe, expect, it } from "vitest";

import { ApiError, StepResponse } from "../src/api.js";
import { RunLoop } from "../src/runloop.js";

function fakeServer(haltAt: number) {
  let step = 0;
  let inFlight = 0;
  let maxInFlight = 0;
  const stepFn = async (n: number): Promise<StepResponse> => {
    inFlight += 1;
    maxInFlight = Math.max(maxInFlight, inFlight);
    await Promise.resolve();
    step += n;
    inFlight -= 1;
    return { step, contours: [], changed: step < haltAt };
  };
  return { stepFn, maxInFlight: () => maxInFlight, step: () => step };
}

const instantWait = () => Promise.resolve();

describe("RunLoop.step", () => {
  it("two step(5) calls show a counter of 10", async () => {
    const server = fakeServer(1000);
    const updates: number[] = [];
    const loop = new RunLoop(server.stepFn, {
      onUpdate: (r) => updates.push(r.step),
      wait: instantWait,
    });
    await loop.step(5);
    await loop.step(5);
    expect(updates).toEqual([5, 10]);
  });

  it("keeps at most one request in flight", async () => {
    const server = fakeServer(1000);
    const loop = new RunLoop(server.stepFn, { onUpdate: () => {}, wait: instantWait });
    await Promise.all([loop.step(1), loop.step(1), loop.step(1)]);
    expect(server.maxInFlight()).toBe(1);
    expect(server.step()).toBe(3);
  });

  it("retries a 409 after the in-flight request resolves", async () => {
    let rejected = false;
    let step = 0;
    const stepFn = async (n: number): Promise<StepResponse> => {
      if (!rejected) {
        rejected = true;
        throw new ApiError(409, "busy");
      }
      step += n;
      return { step, contours: [], changed: true };
    };
    const updates: number[] = [];
    const loop = new RunLoop(stepFn, { onUpdate: (r) => updates.push(r.step), wait: instantWait });
    await loop.step(2);
    expect(rejected).toBe(true);
    expect(updates).toEqual([2]);
  });
});

describe("RunLoop.run", () => {
  it("issues single steps until the server reports no change", async () => {
    const server = fakeServer(7);
    const updates: StepResponse[] = [];
    let halted = false;
    const loop = new RunLoop(server.stepFn, {
      onUpdate: (r) => updates.push(r),
      onHalt: () => (halted = true),
      wait: instantWait,
    });
    await loop.run(5);
    expect(halted).toBe(true);
    expect(updates.map((u) => u.step)).toEqual([1, 2, 3, 4, 5, 6, 7]);
    expect(updates[updates.length - 1].changed).toBe(false);
    expect(loop.isRunning).toBe(false);
  });

  it("pause stops the loop between ticks", async () => {
    const server = fakeServer(1000);
    const loop = new RunLoop(server.stepFn, {
      onUpdate: (r) => {
        if (r.step >= 3) loop.pause();
      },
      wait: instantWait,
    });
    await loop.run(1);
    expect(server.step()).toBe(3);
  });

  it("keeps ticking through transient 409s", async () => {
    let step = 0;
    let throw409 = false;
    const stepFn = async (): Promise<StepResponse> => {
      throw409 = !throw409;
      if (throw409) throw new ApiError(409, "busy");
      step += 1;
      return { step, contours: [], changed: step < 3 };
    };
    let halted = false;
    const loop = new RunLoop(stepFn, {
      onUpdate: () => {},
      onHalt: () => (halted = true),
      wait: instantWait,
    });
    await loop.run(1);
    expect(halted).toBe(true);
    expect(step).toBe(3);
  });
});
