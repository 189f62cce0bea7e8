// Browser wiring: canvas rendering, keyboard control loop, edit buttons.

import {
  ControlState,
  DEFAULT_TUNING,
  KeyState,
  initialControlState,
  mapKeysToAction,
} from "./controls.js";
import { pixelToCell } from "./protocol.js";
import { SessionTransport } from "./transport.js";

const TICK_HZ = 10;
const GRID_SIZE = 4;

interface AppElements {
  canvas: HTMLCanvasElement;
  status: HTMLElement;
  toast: HTMLElement;
  hud: HTMLElement;
  themeButton: HTMLButtonElement;
  objectsButton: HTMLButtonElement;
  snapshotButton: HTMLButtonElement;
  restoreButton: HTMLButtonElement;
  resetButton: HTMLButtonElement;
  editToggle: HTMLInputElement;
}

export class DriveApp {
  private keys: KeyState = { up: false, down: false, left: false, right: false };
  private control: ControlState = initialControlState();
  private transport: SessionTransport | null = null;
  private pendingEdit: { type: "edit"; kind: "theme" | "aindep" } | { type: "snapshot" } |
    { type: "restore"; blob: string } | { type: "reset" } |
    { type: "edit"; kind: "content"; cell: [number, number] } | null = null;
  private savedBlob: string | null = null;
  private editMode = false;
  private lastPng: HTMLImageElement | null = null;

  constructor(private readonly el: AppElements) {}

  async start(): Promise<void> {
    const created = await fetch("/v1/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ seed: Math.floor(Math.random() * 1e9), init: "sample" }),
    });
    if (!created.ok) {
      this.showToast(`session create failed: ${await created.text()}`);
      return;
    }
    const { session_id } = await created.json();
    this.control.sessionId = session_id;
    const scheme = location.protocol === "https:" ? "wss" : "ws";
    const url = `${scheme}://${location.host}/v1/sessions/${session_id}/stream`;
    this.transport = new SessionTransport(
      url,
      (u) => new WebSocket(u) as unknown as import("./transport.js").SocketLike,
      {
        onFrame: (t, png) => this.drawFrame(t, png),
        onSnapshot: (blob) => {
          this.savedBlob = blob;
          this.showToast("snapshot saved");
        },
        onError: (code, msg) => this.showToast(`${code}: ${msg}`),
        onStatus: (status) => {
          this.control.connection = status;
          this.el.status.textContent = status;
        },
      },
    );
    this.transport.connect();
    this.bindInputs();
    setInterval(() => this.tick(), 1000 / TICK_HZ);
  }

  private bindInputs(): void {
    const keymap: Record<string, keyof KeyState> = {
      ArrowUp: "up",
      ArrowDown: "down",
      ArrowLeft: "left",
      ArrowRight: "right",
    };
    document.addEventListener("keydown", (event) => {
      const key = keymap[event.key];
      if (key) {
        this.keys[key] = true;
        event.preventDefault();
        return;
      }
      if (event.key === "t" || event.key === "T") this.queueEdit({ type: "edit", kind: "theme" });
      if (event.key === "o" || event.key === "O") this.queueEdit({ type: "edit", kind: "aindep" });
      if (event.key === "r" || event.key === "R") this.queueEdit({ type: "reset" });
      if (event.key === "c" || event.key === "C") this.toggleEditMode();
    });
    document.addEventListener("keyup", (event) => {
      const key = keymap[event.key];
      if (key) this.keys[key] = false;
    });
    this.el.themeButton.onclick = () => this.queueEdit({ type: "edit", kind: "theme" });
    this.el.objectsButton.onclick = () => this.queueEdit({ type: "edit", kind: "aindep" });
    this.el.snapshotButton.onclick = () => this.queueEdit({ type: "snapshot" });
    this.el.restoreButton.onclick = () => {
      if (this.savedBlob) this.queueEdit({ type: "restore", blob: this.savedBlob });
      else this.showToast("no snapshot saved yet");
    };
    this.el.resetButton.onclick = () => this.queueEdit({ type: "reset" });
    this.el.editToggle.onchange = () => {
      this.editMode = this.el.editToggle.checked;
      this.redraw();
    };
    this.el.canvas.addEventListener("click", (event) => {
      if (!this.editMode) return;
      const rect = this.el.canvas.getBoundingClientRect();
      const px = ((event.clientX - rect.left) / rect.width) * this.el.canvas.width;
      const py = ((event.clientY - rect.top) / rect.height) * this.el.canvas.height;
      const cell = pixelToCell(px, py, this.el.canvas.width, this.el.canvas.height, GRID_SIZE);
      if (cell) this.queueEdit({ type: "edit", kind: "content", cell });
    });
  }

  private toggleEditMode(): void {
    this.editMode = !this.editMode;
    this.el.editToggle.checked = this.editMode;
    this.redraw();
  }

  private queueEdit(message: NonNullable<DriveApp["pendingEdit"]>): void {
    this.pendingEdit = message; // next tick sends it instead of a step
  }

  // One tick: exactly one command goes out, and only if nothing is in flight.
  private tick(): void {
    if (!this.transport) return;
    const { control, action } = mapKeysToAction(this.keys, this.control, 1 / TICK_HZ);
    this.control = control;
    this.updateHud();
    if (this.pendingEdit !== null) {
      if (this.transport.trySendCommand(this.pendingEdit)) {
        this.pendingEdit = null;
      }
      return;
    }
    this.transport.trySendStep([action.speed, action.angularVelocity]);
  }

  private drawFrame(_t: number, png: string): void {
    const img = new Image();
    img.onload = () => {
      this.lastPng = img;
      this.redraw();
    };
    img.src = `data:image/png;base64,${png}`;
  }

  private redraw(): void {
    const ctx = this.el.canvas.getContext("2d");
    if (!ctx) return;
    ctx.imageSmoothingEnabled = false;
    if (this.lastPng) {
      ctx.drawImage(this.lastPng, 0, 0, this.el.canvas.width, this.el.canvas.height);
    }
    if (this.editMode) {
      ctx.strokeStyle = "rgba(255,255,255,0.6)";
      ctx.lineWidth = 1;
      const cw = this.el.canvas.width / GRID_SIZE;
      const ch = this.el.canvas.height / GRID_SIZE;
      for (let k = 1; k < GRID_SIZE; k++) {
        ctx.beginPath();
        ctx.moveTo(k * cw, 0);
        ctx.lineTo(k * cw, this.el.canvas.height);
        ctx.stroke();
        ctx.beginPath();
        ctx.moveTo(0, k * ch);
        ctx.lineTo(this.el.canvas.width, k * ch);
        ctx.stroke();
      }
    }
  }

  private updateHud(): void {
    this.el.hud.textContent =
      `speed ${(this.control.speed * DEFAULT_TUNING.vMax).toFixed(1)} m/s | ` +
      `steer ${(this.control.steering * DEFAULT_TUNING.omegaMax).toFixed(2)} rad/s`;
  }

  private showToast(message: string): void {
    this.el.toast.textContent = message;
    this.el.toast.classList.add("visible");
    setTimeout(() => this.el.toast.classList.remove("visible"), 2500);
  }
}
