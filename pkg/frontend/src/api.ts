/**
 * Typed client for the /v1 HTTP API. The UI never computes domain numbers;
 * everything rendered (success rates, probabilities, blame posteriors) comes
 * from these endpoints or from session event payloads.
 */

import { ProgramDocument } from './ast.js';
import { PaletteEntry, SkillInfo } from './blocks.js';
import { FetchSseSource, SessionStream } from './stream.js';

export interface HardwareInfo {
  name: string;
  kind: string;
  channels: string[];
}

export interface SessionRef {
  session: string;
  seed: number;
}

export interface EcmDocument {
  ecm_version: number;
  skill: string;
  h_min: number;
  clips: { id: string; layer: number; kind: string; label: string }[];
  edges: { src: string; dst: string; h: number; p: number }[];
}

export interface DoaProbe {
  situation: Record<string, unknown>;
  success: boolean;
}

export interface BlameReport {
  argmax: string;
  top: [string, number][];
  tests_executed: number;
  steps: Record<string, unknown>[];
}

export interface ValidationFailure {
  error: string;
  diagnostics?: { path: string; message: string }[];
}

export class ApiError extends Error {
  constructor(public status: number, public body: ValidationFailure) {
    super(body.error ?? `request failed with ${status}`);
  }
}

export class Api {
  constructor(public base = '') {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(`${this.base}${path}`, {
      method,
      headers: body !== undefined ? { 'Content-Type': 'application/json' } : {},
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const text = await response.text();
    const parsed = text ? JSON.parse(text) : null;
    if (!response.ok) throw new ApiError(response.status, parsed ?? { error: text });
    return parsed as T;
  }

  hardware(): Promise<HardwareInfo[]> {
    return this.request('GET', '/v1/hardware');
  }

  behaviours(): Promise<Record<string, PaletteEntry[]>> {
    return this.request('GET', '/v1/behaviours');
  }

  skills(hardware?: string[]): Promise<SkillInfo[]> {
    const query = hardware !== undefined ? `?hardware=${hardware.join(',')}` : '';
    return this.request('GET', `/v1/skills${query}`);
  }

  saveProgram(doc: ProgramDocument): Promise<{ id: string }> {
    return this.request('POST', '/v1/programs', doc);
  }

  updateProgram(id: string, doc: ProgramDocument): Promise<{ id: string }> {
    return this.request('PUT', `/v1/programs/${id}`, doc);
  }

  runProgram(id: string, scenario: string, seed?: number): Promise<SessionRef> {
    return this.request('POST', `/v1/programs/${id}/run`, { scenario, seed });
  }

  createSkill(body: {
    name: string; program_id?: string; behaviour?: string;
    predicate: string; hardware: string[];
  }): Promise<{ id: string }> {
    return this.request('POST', '/v1/skills', body);
  }

  play(skill: string, episodes: number, seed: number): Promise<SessionRef> {
    return this.request('POST', `/v1/skills/${skill}/play`, { episodes, seed });
  }

  ecm(skill: string): Promise<EcmDocument> {
    return this.request('GET', `/v1/skills/${skill}/ecm`);
  }

  doa(skill: string): Promise<{ skill: string; probes: DoaProbe[] }> {
    return this.request('GET', `/v1/skills/${skill}/doa`);
  }

  diagnose(body: { budget: number; seed?: number; inject?: Record<string, unknown> }):
      Promise<SessionRef> {
    return this.request('POST', '/v1/diagnosis', body);
  }

  blame(session: string): Promise<BlameReport> {
    return this.request('GET', `/v1/diagnosis/${session}/blame`);
  }

  executions(params: { skill?: string; limit?: number } = {}):
      Promise<Record<string, unknown>[]> {
    const query = new URLSearchParams();
    if (params.skill) query.set('skill', params.skill);
    if (params.limit) query.set('limit', String(params.limit));
    const suffix = query.toString() ? `?${query}` : '';
    return this.request('GET', `/v1/executions${suffix}`);
  }

  sessionState(session: string): Promise<{ state: string; result: Record<string, unknown> }> {
    return this.request('GET', `/v1/sessions/${session}`);
  }

  stream(session: string): SessionStream {
    return new SessionStream(
      new FetchSseSource(`${this.base}/v1/sessions/${session}/events`));
  }
}
