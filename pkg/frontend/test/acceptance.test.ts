// UI contract acceptance against a live desk server.
//
// Start the simulator first, then:
//   LATENTDRIVE_SERVER=http://127.0.0.1:8321 npm run acceptance
// LATENTDRIVE_DRIVE_SECS shortens the drive for smoke runs (default 60).

import { describe, expect, it } from "vitest";
import WebSocket from "ws";

import { initialControlState, mapKeysToAction } from "../src/controls.js";
import { pixelToCell } from "../src/protocol.js";
import { SessionTransport, SocketLike } from "../src/transport.js";

const SERVER = process.env.LATENTDRIVE_SERVER;
const DRIVE_SECS = Number(process.env.LATENTDRIVE_DRIVE_SECS ?? "60");

const wsFactory = (url: string): SocketLike => {
  const socket = new WebSocket(url);
  const like: SocketLike = {
    send: (data) => socket.send(data),
    close: () => socket.close(),
    onmessage: null,
    onopen: null,
    onclose: null,
  };
  socket.on("open", () => like.onopen?.());
  socket.on("message", (data) => like.onmessage?.({ data: data.toString() }));
  socket.on("close", () => like.onclose?.());
  return like;
};

async function createSession(eps: "frozen" | "stochastic" = "stochastic"): Promise<string> {
  const response = await fetch(`${SERVER}/v1/sessions`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ seed: 7, init: "sample", eps_policy: eps }),
  });
  expect(response.ok).toBe(true);
  const body = (await response.json()) as { session_id: string };
  return body.session_id;
}

function wsUrl(sessionId: string): string {
  return `${SERVER!.replace(/^http/, "ws")}/v1/sessions/${sessionId}/stream`;
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

describe.skipIf(!SERVER)("UI contract against a live server", () => {
  it(
    "keeps at most one step in flight over a full drive",
    async () => {
      const sessionId = await createSession();
      const frames: number[] = [];
      const transport = new SessionTransport(wsUrl(sessionId), wsFactory, {
        onFrame: (t) => frames.push(t),
      });
      transport.connect();
      await sleep(300);

      let seed = 99;
      const rand = () => {
        seed = (seed * 1103515245 + 12345) % 2147483648;
        return seed / 2147483648;
      };
      let control = initialControlState();
      const ticks = Math.max(1, Math.round(DRIVE_SECS * 10));
      for (let i = 0; i < ticks; i++) {
        const keys = {
          up: rand() < 0.5,
          down: rand() < 0.2,
          left: rand() < 0.3,
          right: rand() < 0.3,
        };
        const step = mapKeysToAction(keys, control, 0.1);
        control = step.control;
        transport.trySendStep([step.action.speed, step.action.angularVelocity]);
        await sleep(100);
      }
      transport.close();

      // protocol log assertion: the single-flight discipline held throughout
      expect(transport.log.length).toBeGreaterThan(10);
      for (const entry of transport.log) {
        expect(entry.inFlightAfter).toBeLessThanOrEqual(1);
      }
      expect(frames.length).toBeGreaterThan(ticks / 2);
      // frames arrived in order
      for (let i = 1; i < frames.length; i++) {
        expect(frames[i]).toBeGreaterThanOrEqual(frames[i - 1]);
      }
    },
    (DRIVE_SECS + 30) * 1000,
  );

  it("grid-click mapping is exact for all 16 cells", () => {
    for (let row = 0; row < 4; row++) {
      for (let col = 0; col < 4; col++) {
        const px = (col + 0.5) * 128;
        const py = (row + 0.5) * 128;
        expect(pixelToCell(px, py, 512, 512, 4)).toEqual([row, col]);
      }
    }
  });

  it("snapshot/restore round-trips to an identical frame", async () => {
    const sessionId = await createSession("stochastic");
    const pngs: string[] = [];
    let blob: string | null = null;
    const transport = new SessionTransport(wsUrl(sessionId), wsFactory, {
      onFrame: (_t, png) => pngs.push(png),
      onSnapshot: (b) => (blob = b),
    });
    transport.connect();
    await sleep(300);

    transport.trySendStep([2.0, 0.1]);
    await sleep(300);
    const frameAtSnapshot = pngs[pngs.length - 1];
    transport.trySendCommand({ type: "snapshot" });
    await sleep(300);
    expect(blob).not.toBeNull();

    for (let i = 0; i < 5; i++) {
      transport.trySendStep([3.0, -0.2]);
      await sleep(150);
    }
    expect(pngs[pngs.length - 1]).not.toBe(frameAtSnapshot);

    transport.trySendCommand({ type: "restore", blob: blob! });
    await sleep(300);
    transport.close();
    expect(pngs[pngs.length - 1]).toBe(frameAtSnapshot);
  }, 30_000);

  it("keyboard fuzz keeps controls in range (10^4 events)", () => {
    let seed = 7;
    const rand = () => {
      seed = (seed * 1103515245 + 12345) % 2147483648;
      return seed / 2147483648;
    };
    let control = initialControlState();
    for (let i = 0; i < 10_000; i++) {
      const keys = {
        up: rand() < 0.4,
        down: rand() < 0.4,
        left: rand() < 0.4,
        right: rand() < 0.4,
      };
      const { control: next, action } = mapKeysToAction(keys, control, 0.01 + rand() * 0.2);
      expect(next.speed).toBeGreaterThanOrEqual(0);
      expect(next.speed).toBeLessThanOrEqual(1);
      expect(Math.abs(next.steering)).toBeLessThanOrEqual(1);
      expect(action.speed).toBeGreaterThanOrEqual(0);
      control = next;
    }
  });
});
