/** Wire-level frame and body shapes of the co-processing protocol (v1). */

export const PROTOCOL_VERSION = 1;

export type FrameType =
  | "hello"
  | "step_begin"
  | "geometry"
  | "similarity"
  | "prune_proposal"
  | "prune_command"
  | "prune_ack"
  | "step_end"
  | "bye";

export interface Frame {
  type: FrameType;
  step: number | null;
  seq: number;
  body: Record<string, unknown>;
}

export type ViewName = "weight_grid" | "image_grid" | "distribution_grid" | "trajectory";

export interface GeometryBody {
  view: ViewName;
  layer: number;
  points: number[]; // flat x,y,z triples
  verts: number[];
  quads: number[]; // flat groups of 4 point indices
  scalars: Record<string, number[]>;
}

export interface SimilarityBody {
  step: number;
  layer: number;
  threshold: number;
  matrix: number[][];
  groups: { members: number[]; keep: number }[];
}

export interface Merge {
  keep: number;
  remove: number[];
}

export interface ProposalBody {
  proposal_id: string;
  layer: number;
  merges: Merge[];
  created_at_step: number;
}

export interface AckBody {
  proposal_id: string;
  applied: boolean;
  new_filter_count?: number;
  reason?: string;
}

export interface HelloBody {
  protocol_version: number;
  layers?: { layer: number; filters: number; window: number }[];
  views?: string[];
}
