// Wire message types for the simulation server and pixel-to-cell mapping.

export type ClientMessage =
  | { type: "step"; action: [number, number] }
  | { type: "edit"; kind: "theme" | "aindep" }
  | { type: "edit"; kind: "content"; cell: [number, number] }
  | { type: "snapshot" }
  | { type: "restore"; blob: string }
  | { type: "reset" };

export type ServerMessage =
  | { type: "frame"; t: number; png: string }
  | { type: "snapshot"; blob: string }
  | { type: "error"; code: string; msg: string };

export function parseServerMessage(raw: string): ServerMessage {
  const data = JSON.parse(raw);
  if (data && (data.type === "frame" || data.type === "snapshot" || data.type === "error")) {
    return data as ServerMessage;
  }
  return { type: "error", code: "bad_server_message", msg: `unrecognized: ${raw}` };
}

// Canvas pixel -> content grid cell: row from y, column from x.
export function pixelToCell(
  px: number,
  py: number,
  width: number,
  height: number,
  gridSize: number,
): [number, number] | null {
  if (px < 0 || py < 0 || px >= width || py >= height) {
    return null;
  }
  const row = Math.floor((gridSize * py) / height);
  const col = Math.floor((gridSize * px) / width);
  return [Math.min(row, gridSize - 1), Math.min(col, gridSize - 1)];
}
