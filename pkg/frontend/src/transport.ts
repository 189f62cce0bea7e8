// Session transport: one-command-in-flight discipline, monotone frame
// ordering, reconnect with backoff and snapshot-based session recovery.

import { ClientMessage, ServerMessage, parseServerMessage } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((event: { data: string }) => void) | null;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface TransportEvents {
  onFrame?: (t: number, png: string) => void;
  onSnapshot?: (blob: string) => void;
  onError?: (code: string, msg: string) => void;
  onStatus?: (status: "connecting" | "open" | "closed") => void;
}

export interface LogEntry {
  dir: "send" | "recv";
  type: string;
  inFlightAfter: number;
}

export class SessionTransport {
  private socket: SocketLike | null = null;
  private inFlightCount = 0;
  private lastFrameT = -1;
  private restoreBlob: string | null = null;
  private backoffMs = 250;
  private closedByUser = false;
  readonly log: LogEntry[] = [];

  constructor(
    private readonly url: string,
    private readonly factory: SocketFactory,
    private readonly events: TransportEvents = {},
    private readonly scheduleReconnect: (fn: () => void, ms: number) => void = (fn, ms) =>
      setTimeout(fn, ms),
  ) {}

  get inFlight(): number {
    return this.inFlightCount;
  }

  get lastFrame(): number {
    return this.lastFrameT;
  }

  connect(): void {
    this.closedByUser = false;
    this.events.onStatus?.("connecting");
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.backoffMs = 250;
      this.inFlightCount = 0;
      this.events.onStatus?.("open");
      if (this.restoreBlob !== null) {
        // recover the session we had before the drop
        this.sendNow({ type: "restore", blob: this.restoreBlob });
      }
    };
    socket.onmessage = (event) => this.handleMessage(parseServerMessage(event.data));
    socket.onclose = () => {
      this.socket = null;
      this.inFlightCount = 0;
      this.events.onStatus?.("closed");
      if (!this.closedByUser) {
        this.scheduleReconnect(() => this.connect(), this.backoffMs);
        this.backoffMs = Math.min(this.backoffMs * 2, 8000);
      }
    };
  }

  close(): void {
    this.closedByUser = true;
    this.socket?.close();
    this.socket = null;
  }

  // Send a step only when nothing is in flight; returns whether it went out.
  trySendStep(action: [number, number]): boolean {
    if (this.socket === null || this.inFlightCount > 0) {
      return false;
    }
    this.sendNow({ type: "step", action });
    return true;
  }

  // Edits and snapshot commands share the same single-slot discipline.
  trySendCommand(message: ClientMessage): boolean {
    if (this.socket === null || this.inFlightCount > 0) {
      return false;
    }
    this.sendNow(message);
    return true;
  }

  private sendNow(message: ClientMessage): void {
    if (message.type === "restore" || message.type === "reset") {
      this.lastFrameT = -1; // time legitimately rewinds
    }
    this.inFlightCount += 1;
    this.log.push({ dir: "send", type: message.type, inFlightAfter: this.inFlightCount });
    this.socket!.send(JSON.stringify(message));
  }

  private handleMessage(message: ServerMessage): void {
    this.inFlightCount = Math.max(0, this.inFlightCount - 1);
    this.log.push({ dir: "recv", type: message.type, inFlightAfter: this.inFlightCount });
    if (message.type === "frame") {
      if (message.t < this.lastFrameT) {
        return; // stale frame: a newer one already rendered
      }
      this.lastFrameT = message.t;
      this.events.onFrame?.(message.t, message.png);
    } else if (message.type === "snapshot") {
      this.restoreBlob = message.blob;
      this.events.onSnapshot?.(message.blob);
    } else {
      this.events.onError?.(message.code, message.msg);
    }
  }

  rememberSnapshot(blob: string): void {
    this.restoreBlob = blob;
  }
}
