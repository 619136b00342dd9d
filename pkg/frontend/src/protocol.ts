/**
 * Frame codec for the stream: 4-byte big-endian payload length followed by a
 * UTF-8 JSON object {type, step, seq, body}.
 */

import { Frame } from "./types.js";

const encoder = new TextEncoder();
const decoder = new TextDecoder("utf-8", { fatal: true });

export function encodeFrame(frame: Frame): Uint8Array {
  const body = encoder.encode(JSON.stringify(frame));
  const out = new Uint8Array(4 + body.length);
  new DataView(out.buffer).setUint32(0, body.length, false);
  out.set(body, 4);
  return out;
}

/** Incremental decoder: feed arbitrary byte chunks, get complete frames. */
export class FrameDecoder {
  private buffer = new Uint8Array(0);

  feed(chunk: Uint8Array): Frame[] {
    const merged = new Uint8Array(this.buffer.length + chunk.length);
    merged.set(this.buffer, 0);
    merged.set(chunk, this.buffer.length);
    this.buffer = merged;

    const frames: Frame[] = [];
    for (;;) {
      if (this.buffer.length < 4) break;
      const size = new DataView(this.buffer.buffer, this.buffer.byteOffset).getUint32(0, false);
      if (this.buffer.length < 4 + size) break;
      const payload = this.buffer.subarray(4, 4 + size);
      frames.push(JSON.parse(decoder.decode(payload)) as Frame);
      this.buffer = this.buffer.slice(4 + size);
    }
    return frames;
  }

  get pendingBytes(): number {
    return this.buffer.length;
  }
}
