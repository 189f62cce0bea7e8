import { DriveApp } from "./app.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

window.addEventListener("DOMContentLoaded", () => {
  const app = new DriveApp({
    canvas: byId<HTMLCanvasElement>("frame"),
    status: byId("status"),
    toast: byId("toast"),
    hud: byId("hud"),
    themeButton: byId<HTMLButtonElement>("btn-theme"),
    objectsButton: byId<HTMLButtonElement>("btn-objects"),
    snapshotButton: byId<HTMLButtonElement>("btn-snapshot"),
    restoreButton: byId<HTMLButtonElement>("btn-restore"),
    resetButton: byId<HTMLButtonElement>("btn-reset"),
    editToggle: byId<HTMLInputElement>("edit-mode"),
  });
  app.start();
});
