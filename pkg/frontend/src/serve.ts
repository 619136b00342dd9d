/**
 * Static file server for the dashboard: serves index.html, the compiled
 * dist/ modules and node_modules (for the three.js import map).
 *
 * Usage: node dist/serve.js [--port 7080]
 */

import path from "node:path";
import process from "node:process";
import { fileURLToPath } from "node:url";
import express from "express";

const here = path.dirname(fileURLToPath(import.meta.url));
const root = path.resolve(here, "..");

const idx = process.argv.indexOf("--port");
const port = idx >= 0 ? Number(process.argv[idx + 1]) : 7080;

const app = express();
app.use(express.static(root));
app.listen(port, () => console.log(`viewer on http://127.0.0.1:${port}/`));
