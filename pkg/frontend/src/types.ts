/** Shared wire types for the session service API. */

export interface SessionInfo {
  session_id: string;
  domain: string;
  max_steps: number;
  status: 'ACTIVE' | 'COMPLETE';
  steps: number;
}

export interface ScenePart {
  id: string;
  primitive: string;
  params: Record<string, number>;
  pose: { center: [number, number, number]; basis: number[][] };
}

export interface SceneOp {
  op: 'union' | 'difference' | 'intersection';
  inputs: string[];
  target: string;
}

export interface SceneJson {
  parts: ScenePart[];
  ops: SceneOp[];
}

export interface ConstructDict {
  kind: 'part' | 'relation';
  part?: string;
  subpart?: string;
  property?: string;
  endpoints?: [string, string];
  descriptor?: string[];
  operation: string;
  value?: unknown;
  delta?: unknown;
}

export interface StepRecord {
  index: number;
  instruction: string;
  status: 'ok' | 'failed';
  delta: { constructs: ConstructDict[] } | null;
  program: { Parts: Record<string, Record<string, string[]>>; Relationships: Record<string, string[]> } | null;
  modeling: string | null;
  scene: SceneJson | null;
  stats: { volume: number; stderr: number } | null;
  candidates: Record<string, unknown>;
  ranking: { step: number; ranks: Record<string, number>; k: number; partial: boolean } | null;
  error: { code: string; message: string } | null;
}

export interface HistoryResponse {
  session: SessionInfo;
  steps: StepRecord[];
}
