// Keyboard-to-action mapping with ramping speed and self-centering steering.

export interface KeyState {
  up: boolean;
  down: boolean;
  left: boolean;
  right: boolean;
}

export interface ControlState {
  speed: number;     // normalized [0, 1]
  steering: number;  // normalized [-1, 1]
  connection: "connecting" | "open" | "closed";
  sessionId: string | null;
  epsMode: "stochastic" | "frozen" | null;
}

export interface ActionVector {
  speed: number;
  angularVelocity: number;
}

export interface ControlTuning {
  speedRampPerSec: number;
  steerRampPerSec: number;
  steerDecayPerSec: number;
  vMax: number;
  omegaMax: number;
}

export const DEFAULT_TUNING: ControlTuning = {
  speedRampPerSec: 0.8,
  steerRampPerSec: 2.0,
  steerDecayPerSec: 2.0,
  vMax: 8.0,
  omegaMax: 1.2,
};

export function initialControlState(): ControlState {
  return { speed: 0, steering: 0, connection: "connecting", sessionId: null, epsMode: null };
}

const clamp = (value: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, value));

// One control tick. Left/right cancel; with no steering keys the wheel
// decays linearly toward center. Output action is denormalized to the
// server's bounds.
export function mapKeysToAction(
  keys: KeyState,
  prev: ControlState,
  dt: number,
  tuning: ControlTuning = DEFAULT_TUNING,
): { control: ControlState; action: ActionVector } {
  if (!(dt > 0)) {
    throw new Error(`dt must be > 0, got ${dt}`);
  }
  let speed = prev.speed;
  if (keys.up && !keys.down) speed += tuning.speedRampPerSec * dt;
  if (keys.down && !keys.up) speed -= tuning.speedRampPerSec * dt;
  speed = clamp(speed, 0, 1);

  let steering = prev.steering;
  const steerInput = (keys.left ? 1 : 0) - (keys.right ? 1 : 0);
  if (steerInput !== 0) {
    steering = clamp(steering + steerInput * tuning.steerRampPerSec * dt, -1, 1);
  } else if (!keys.left && !keys.right) {
    const decay = tuning.steerDecayPerSec * dt;
    steering = Math.abs(steering) <= decay ? 0 : steering - Math.sign(steering) * decay;
  }
  // simultaneous left+right: steerInput is 0 but both keys held - hold position

  const control: ControlState = { ...prev, speed, steering };
  const action: ActionVector = {
    speed: speed * tuning.vMax,
    angularVelocity: steering * tuning.omegaMax,
  };
  return { control, action };
}
