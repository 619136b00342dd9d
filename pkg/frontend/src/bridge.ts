/**
 * TCP <-> WebSocket bridge.
 *
 * Translates the length-prefixed TCP frame stream into one WebSocket text
 * message per frame (and back), 1:1 with no aggregation, so the browser
 * session speaks plain JSON.  One browser client at a time; the TCP
 * connection to the trainer is opened when a client attaches and torn down
 * when it leaves.
 *
 * Usage: node dist/bridge.js [--tcp host:port] [--ws port]
 */

import net from "node:net";
import process from "node:process";
import { WebSocketServer, WebSocket } from "ws";

import { encodeFrame, FrameDecoder } from "./protocol.js";
import { Frame } from "./types.js";

function argValue(name: string, fallback: string): string {
  const idx = process.argv.indexOf(name);
  return idx >= 0 && idx + 1 < process.argv.length ? process.argv[idx + 1] : fallback;
}

const tcpTarget = argValue("--tcp", "127.0.0.1:7040");
const wsPort = Number(argValue("--ws", "7041"));
const [tcpHost, tcpPort] = [tcpTarget.slice(0, tcpTarget.lastIndexOf(":")), Number(tcpTarget.slice(tcpTarget.lastIndexOf(":") + 1))];

const server = new WebSocketServer({ port: wsPort });
console.log(`bridge: ws://0.0.0.0:${wsPort} <-> tcp ${tcpHost}:${tcpPort}`);

let active: WebSocket | null = null;

server.on("connection", (ws) => {
  if (active !== null) {
    ws.close(1013, "another viewer is connected");
    return;
  }
  active = ws;
  const decoder = new FrameDecoder();
  const tcp = net.connect(tcpPort, tcpHost);
  tcp.setNoDelay(true);

  tcp.on("data", (data: Buffer) => {
    for (const frame of decoder.feed(new Uint8Array(data))) {
      ws.send(JSON.stringify(frame));
    }
  });
  tcp.on("error", (err) => {
    console.error(`bridge: tcp error: ${err.message}`);
    ws.close(1011, "trainer connection lost");
  });
  tcp.on("close", () => ws.close(1000, "trainer closed"));

  ws.on("message", (data) => {
    const frame = JSON.parse(data.toString()) as Frame;
    tcp.write(encodeFrame(frame));
  });
  ws.on("close", () => {
    tcp.destroy();
    active = null;
  });
});
