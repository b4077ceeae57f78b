/**
 * Wire protocol loop: newline-delimited JSON over stdin/stdout.
 *
 * Handshake first ({"hello":{"protocol":1,"metrics":[...]}}), then exactly
 * one response per request line. A malformed line gets an error response
 * and the loop continues.
 */

import readline from 'node:readline';

import { MetricName } from './metrics.js';

export interface Scorer {
  (metric: MetricName, rfv1Path: string): number | Promise<number>;
}

export function serve(metrics: MetricName[], scorer: Scorer): void {
  process.stdout.write(JSON.stringify({ hello: { protocol: 1, metrics } }) + '\n');

  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  let busy = Promise.resolve();

  rl.on('line', (line: string) => {
    // Serialize responses: one outstanding request per connection.
    busy = busy.then(() => handle(line, metrics, scorer));
  });
}

async function handle(line: string, metrics: MetricName[], scorer: Scorer): Promise<void> {
  if (line.trim() === '') return;
  let id = 0;
  try {
    const req = JSON.parse(line);
    if (typeof req !== 'object' || req === null) {
      throw new Error('request is not a JSON object');
    }
    if (typeof req.id !== 'number') {
      throw new Error('request is missing a numeric id');
    }
    id = req.id;
    if (typeof req.metric !== 'string' || typeof req.rfv1_path !== 'string') {
      throw new Error('request needs string fields "metric" and "rfv1_path"');
    }
    if (!metrics.includes(req.metric as MetricName)) {
      throw new Error(`metric ${JSON.stringify(req.metric)} not advertised by this sidecar`);
    }
    const score = await scorer(req.metric as MetricName, req.rfv1_path);
    respond({ id, score });
  } catch (err) {
    respond({ id, error: err instanceof Error ? err.message : String(err) });
  }
}

function respond(message: object): void {
  process.stdout.write(JSON.stringify(message) + '\n');
}
