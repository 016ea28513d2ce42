import { startBridge } from "./bridge.js";

const wsPort = Number(process.env.BRIDGE_PORT ?? 8765);
const simHost = process.env.SIM_HOST ?? "127.0.0.1";
const simPort = Number(process.env.SIM_PORT ?? 9500);

startBridge({ wsPort, simHost, simPort })
  .then((handle) => {
    console.log(`bridge ws://127.0.0.1:${handle.port} -> tcp ${simHost}:${simPort}`);
  })
  .catch((err) => {
    console.error(`bridge failed: ${err}`);
    process.exit(1);
  });
