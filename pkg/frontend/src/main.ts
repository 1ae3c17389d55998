/**
 * Terminal operator console (node): connects to a running service over TCP.
 *
 *   npm run console -- --host 127.0.0.1 --port 7321
 *
 * Commands:
 *   drive <vx> <vy> <vtheta>     continuous base velocity
 *   stop                         zero the drive command
 *   step <foot> <length>         semi-autonomous step (fl/fr/rl/rr)
 *   feed <foot> <length>         drive one foot forward
 *   shift <length>               shift the base forward
 *   wrist <dx> <dy> <dz>         masked wrist nudge (left arm, translation)
 *   grasp <category> <object>    autonomous grasp pipeline
 *   estop                        stop everything
 *   status                       print the latest telemetry summary
 *   quit
 */

import * as readline from "node:readline";

import { ConsoleApp } from "./console.js";
import { indicators, topView } from "./render.js";
import { connectTcp } from "./transport.js";

function parseArgs(): { host: string; port: number } {
  const argv = process.argv.slice(2);
  let host = "127.0.0.1";
  let port = 7321;
  for (let i = 0; i < argv.length; i += 1) {
    if (argv[i] === "--host") host = argv[i + 1];
    if (argv[i] === "--port") port = Number(argv[i + 1]);
  }
  return { host, port };
}

function statusLine(app: ConsoleApp): string {
  const ind = indicators(app.state);
  const f = app.state.frame;
  if (!f) return "no telemetry yet";
  const top = topView(f);
  const contacts = Object.entries(ind.contacts)
    .map(([k, v]) => `${k}${v ? "+" : "-"}`).join(" ");
  return `t=${f.sim_time.toFixed(2)}s mode=${ind.mode} ` +
    `base=(${top.baseX.toFixed(2)},${top.baseY.toFixed(2)}) ` +
    `step=${ind.steppingPhase}${ind.steppingFoot ? "/" + ind.steppingFoot : ""} ` +
    `margin=${ind.marginText} contacts=[${contacts}] rtt=${ind.latencyText}`;
}

async function main(): Promise<void> {
  const { host, port } = parseArgs();
  const app = new ConsoleApp();
  console.log(`connecting to ${host}:${port} ...`);
  app.attach(await connectTcp(host, port));

  let lastAckCount = 0;
  app.onChange(() => {
    const log = app.state.ackLog;
    for (; lastAckCount < log.length; lastAckCount += 1) {
      const a = log[lastAckCount];
      console.log(`  [${a.status}] ${a.kind} #${a.seq} ${a.detail}`);
    }
  });

  const rl = readline.createInterface({ input: process.stdin,
                                        output: process.stdout,
                                        prompt: "op> " });
  rl.prompt();
  rl.on("line", (line) => {
    const [cmd, ...args] = line.trim().split(/\s+/);
    try {
      switch (cmd) {
        case "drive":
          app.drive({ vx: Number(args[0] ?? 0), vy: Number(args[1] ?? 0),
                      vtheta: Number(args[2] ?? 0) });
          break;
        case "stop":
          app.drive({ vx: 0, vy: 0, vtheta: 0 });
          break;
        case "step":
          app.stepFoot(args[0] as never, Number(args[1] ?? 0.12));
          break;
        case "feed":
          app.driveFoot(args[0] as never, Number(args[1] ?? 0.1));
          break;
        case "shift":
          app.shiftBase(Number(args[0] ?? 0.1));
          break;
        case "wrist":
          app.wrist({
            endEffector: "left_arm",
            translationMask: [true, true, true],
            rotationMask: [false, false, false],
            deltaTranslation: [Number(args[0] ?? 0), Number(args[1] ?? 0),
                               Number(args[2] ?? 0)],
            deltaRotation: [0, 0, 0],
          });
          break;
        case "grasp":
          app.grasp(args[0] ?? "drill", args[1] ?? "drill1");
          break;
        case "estop":
          app.estop();
          break;
        case "status":
          console.log(statusLine(app));
          break;
        case "quit":
        case "exit":
          app.close();
          rl.close();
          process.exit(0);
          break;
        case "":
          break;
        default:
          console.log(`unknown command '${cmd}'`);
      }
    } catch (e) {
      console.log(`error: ${(e as Error).message}`);
    }
    rl.prompt();
  });

  setInterval(() => {
    if (app.state.frame) {
      process.stdout.write(`\r${statusLine(app)}   \rop> `);
    }
  }, 1000);
}

main().catch((e) => {
  console.error(e.message ?? e);
  process.exit(1);
});
