/**
 * Viewer-side session state machine.
 *
 * Frames stream in (already decoded); the session reassembles step groups
 * and only exposes complete ones, tracks the latest geometry per
 * (view, layer), and runs the proposal lifecycle: a proposal is always in
 * exactly one of pending | applied | dismissed | stale.  At most one step
 * group is buffered in flight; a step_begin arriving mid-group discards the
 * unfinished group.  Received geometry is never mutated.
 */

import {
  AckBody,
  Frame,
  GeometryBody,
  HelloBody,
  ProposalBody,
  PROTOCOL_VERSION,
  SimilarityBody,
} from "./types.js";

export type ProposalStatus = "pending" | "applied" | "dismissed" | "stale";

export interface ProposalState {
  body: ProposalBody;
  status: ProposalStatus;
  reason?: string;
  newFilterCount?: number;
  commandSentAt?: number;
}

export interface SessionEvents {
  onStepGroup?: (step: number, frames: Frame[]) => void;
  onProposal?: (proposal: ProposalState) => void;
  onAck?: (ack: AckBody) => void;
  onClose?: (reason: string) => void;
}

export type ConnectionState = "idle" | "handshaking" | "live" | "closed";

export class ViewerSession {
  connectionState: ConnectionState = "idle";
  serverInfo: HelloBody | null = null;
  latest = new Map<string, GeometryBody>();
  latestSimilarity: SimilarityBody | null = null;
  proposals = new Map<string, ProposalState>();
  droppedGroups = 0;
  completeGroups = 0;
  skippedFrames = 0;
  lastStep: number | null = null;

  private group: Frame[] | null = null;
  private seq = 0;

  constructor(
    private send: (frame: Frame) => void,
    private events: SessionEvents = {},
    private now: () => number = () => Date.now(),
    public ackTimeoutMs = 10_000,
  ) {}

  start(): void {
    this.connectionState = "handshaking";
    this.sendFrame("hello", { protocol_version: PROTOCOL_VERSION });
  }

  private sendFrame(type: Frame["type"], body: Record<string, unknown>): void {
    this.send({ type, step: null, seq: this.seq++, body });
  }

  ingest(frame: Frame): void {
    if (!frame || typeof frame.type !== "string") {
      this.skippedFrames++;
      return;
    }
    switch (frame.type) {
      case "hello":
        this.serverInfo = frame.body as unknown as HelloBody;
        this.connectionState = "live";
        return;
      case "bye":
        this.connectionState = "closed";
        this.events.onClose?.(String(frame.body?.reason ?? "server closed"));
        return;
      case "step_begin":
        if (this.group !== null) this.skippedFrames += this.group.length; // incomplete group discarded
        this.group = [frame];
        return;
      case "geometry":
      case "similarity":
      case "prune_proposal":
        if (this.group === null) {
          this.skippedFrames++;
          return;
        }
        this.group.push(frame);
        return;
      case "step_end":
        if (this.group === null) {
          this.skippedFrames++;
          return;
        }
        this.group.push(frame);
        this.commitGroup(this.group);
        this.group = null;
        return;
      case "prune_ack":
        this.handleAck(frame.body as unknown as AckBody);
        return;
      default:
        this.skippedFrames++;
    }
  }

  /** Apply a complete step group: only here does visible state change. */
  private commitGroup(frames: Frame[]): void {
    const step = frames[0].step;
    for (const frame of frames) {
      if (frame.type === "geometry") {
        const body = frame.body as unknown as GeometryBody;
        if (!this.validGeometry(body)) {
          this.skippedFrames++;
          continue;
        }
        this.latest.set(`${body.view}:${body.layer}`, body);
      } else if (frame.type === "similarity") {
        this.latestSimilarity = frame.body as unknown as SimilarityBody;
      } else if (frame.type === "prune_proposal") {
        const body = frame.body as unknown as ProposalBody;
        const state: ProposalState = { body, status: "pending" };
        this.proposals.set(body.proposal_id, state);
        this.events.onProposal?.(state);
      } else if (frame.type === "step_end") {
        const dropped = frame.body?.dropped_groups;
        if (typeof dropped === "number") this.droppedGroups = dropped;
      }
    }
    this.lastStep = step;
    this.completeGroups++;
    this.events.onStepGroup?.(step ?? -1, frames);
  }

  private validGeometry(body: GeometryBody): boolean {
    if (!body || !Array.isArray(body.points) || body.points.length % 3 !== 0) return false;
    const n = body.points.length / 3;
    const inRange = (idx: number) => Number.isInteger(idx) && idx >= 0 && idx < n;
    if (!Array.isArray(body.quads) || body.quads.length % 4 !== 0 || !body.quads.every(inRange)) return false;
    if (!Array.isArray(body.verts) || !body.verts.every(inRange)) return false;
    return Object.values(body.scalars ?? {}).every((arr) => Array.isArray(arr) && arr.length === n);
  }

  geometry(view: string, layer: number): GeometryBody | undefined {
    return this.latest.get(`${view}:${layer}`);
  }

  pendingProposals(): ProposalState[] {
    return [...this.proposals.values()].filter((p) => p.status === "pending");
  }

  actOnProposal(proposalId: string, action: "apply" | "dismiss"): void {
    const state = this.proposals.get(proposalId);
    if (!state || state.status !== "pending") {
      throw new Error(`proposal ${proposalId} is not pending`);
    }
    state.commandSentAt = this.now();
    this.sendFrame("prune_command", { proposal_id: proposalId, action });
  }

  private handleAck(ack: AckBody): void {
    const state = this.proposals.get(ack.proposal_id);
    if (state && state.status === "pending") {
      if (ack.applied) {
        state.status = "applied";
        state.newFilterCount = ack.new_filter_count;
      } else if (ack.reason === "dismissed") {
        state.status = "dismissed";
      } else {
        state.status = "stale";
        state.reason = ack.reason;
      }
    }
    this.events.onAck?.(ack);
  }

  /** Mark proposals whose command got no ack within the timeout as stale. */
  checkTimeouts(): void {
    const t = this.now();
    for (const state of this.proposals.values()) {
      if (
        state.status === "pending" &&
        state.commandSentAt !== undefined &&
        t - state.commandSentAt > this.ackTimeoutMs
      ) {
        state.status = "stale";
        state.reason = "ack timeout";
      }
    }
  }
}
