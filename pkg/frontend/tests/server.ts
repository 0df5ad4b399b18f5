/** Spawn a real roadsight service over a freshly seeded fixture root. */

import { ChildProcess, execFileSync, spawn } from 'node:child_process';
import { mkdtempSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';

const here = dirname(fileURLToPath(import.meta.url));
const repoRoot = join(here, '..', '..');

export interface TestServer {
  baseUrl: string;
  root: string;
  stop(): void;
}

let nextPort = 8731 + (process.pid % 101);

export async function startServer(): Promise<TestServer> {
  const root = mkdtempSync(join(tmpdir(), 'roadsight-ui-'));
  execFileSync('python3', [join(here, 'make_fixture.py'), root]);

  const port = nextPort++;
  const proc: ChildProcess = spawn(
    'python3',
    ['-m', 'roadsight.cli', 'serve', '--root', root, '--port', String(port)],
    { cwd: repoRoot, stdio: ['ignore', 'ignore', 'pipe'] },
  );
  let stderr = '';
  proc.stderr?.on('data', (chunk) => (stderr += String(chunk)));

  const baseUrl = `http://127.0.0.1:${port}`;
  const stop = () => {
    proc.kill();
    rmSync(root, { recursive: true, force: true });
  };

  for (let attempt = 0; attempt < 150; attempt++) {
    if (proc.exitCode !== null) break;
    try {
      const res = await fetch(`${baseUrl}/api/stats`);
      if (res.ok) return { baseUrl, root, stop };
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  stop();
  throw new Error(`service did not start on ${baseUrl}\n${stderr}`);
}
